#include "aerocrowd/flow.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>

#include "aerocrowd/error.hpp"
#include "aerocrowd/parallel.hpp"

namespace aerocrowd {

namespace {

// How a cell enters one equation.
enum class Role : std::uint8_t {
  kUnknown,  // solved for
  kFixed,    // Dirichlet value held in the cell
  kNoFlux,   // no diffusive flux, unusable for reconstruction
  kCopy,     // zero-gradient copy: no diffusive flux, usable upstream value
};

// Indexed by CellKind: fluid, wall, inlet, outlet, immersed.
using RoleMap = std::array<Role, 5>;
constexpr RoleMap kMomentumRoles{Role::kUnknown, Role::kFixed, Role::kFixed, Role::kCopy, Role::kFixed};
constexpr RoleMap kTemperatureRoles{Role::kUnknown, Role::kNoFlux, Role::kFixed, Role::kCopy, Role::kFixed};
constexpr RoleMap kScalarRoles{Role::kUnknown, Role::kNoFlux, Role::kFixed, Role::kCopy, Role::kUnknown};
constexpr RoleMap kPressureRoles{Role::kUnknown, Role::kNoFlux, Role::kNoFlux, Role::kFixed, Role::kNoFlux};

constexpr std::array<int, 4> kDi{1, -1, 0, 0};
constexpr std::array<int, 4> kDj{0, 0, 1, -1};

Role role_of(const RoleMap& roles, CellKind kind) { return roles[static_cast<int>(kind)]; }

int xface(const Grid& g, int i, int j) { return j * (g.nx() + 1) + i; }
int yface(const Grid& g, int i, int j) { return j * g.nx() + i; }

// Outward normal face velocity of cell (i, j) in direction d.
double outward_flux(const Grid& g, const std::vector<double>& fu, const std::vector<double>& fv, int i, int j,
                    int d) {
  switch (d) {
    case 0: return fu[xface(g, i + 1, j)];
    case 1: return -fu[xface(g, i, j)];
    case 2: return fv[yface(g, i, j + 1)];
    default: return -fv[yface(g, i, j)];
  }
}

// Unknown set of one equation with its neighbour structure.
struct System {
  std::vector<int> cells;                 // grid index per unknown
  std::vector<int> local;                 // unknown number per grid index, -1 otherwise
  std::vector<std::array<int, 4>> nbr;    // coupled unknown neighbours, -1 otherwise
  std::vector<int> coupled;               // neighbours that are unknown or fixed
};

System build_system(const Grid& g, const RoleMap& roles) {
  System s;
  s.local.assign(g.size(), -1);
  for (int idx = 0; idx < g.size(); ++idx) {
    if (role_of(roles, g.kind(idx)) == Role::kUnknown) {
      s.local[idx] = static_cast<int>(s.cells.size());
      s.cells.push_back(idx);
    }
  }
  s.nbr.resize(s.cells.size());
  s.coupled.assign(s.cells.size(), 0);
  for (size_t k = 0; k < s.cells.size(); ++k) {
    const int i = g.col(s.cells[k]);
    const int j = g.row(s.cells[k]);
    for (int d = 0; d < 4; ++d) {
      s.nbr[k][d] = -1;
      const int ni = i + kDi[d];
      const int nj = j + kDj[d];
      if (!g.in_range(ni, nj)) continue;
      const int n = g.index(ni, nj);
      const Role r = role_of(roles, g.kind(n));
      if (r == Role::kUnknown) s.nbr[k][d] = s.local[n];
      if (r == Role::kUnknown || r == Role::kFixed) ++s.coupled[k];
    }
  }
  return s;
}

// Van Leer limited face value from the upwind cell U, downwind D and far
// upwind F; first order when F is unusable.
double limited(double qu, double qd, const double* qf) {
  if (!qf) return qu;
  const double dd = qd - qu;
  const double du = qu - *qf;
  if (dd * du <= 0.0) return qu;
  return qu + dd * du / (dd + du);
}

struct TransportSpec {
  const RoleMap* roles;
  double kappa;
  bool conservative;
};

// -div(F q) or -F.grad q, plus kappa lap q, at each unknown of the system.
template <class Source>
void transport_rhs(const Grid& g, const System& sys, const TransportSpec& spec, const FlowState& state,
                   const ScalarField& q, Source&& source, std::vector<double>& out) {
  const double h = g.h();
  const RoleMap& roles = *spec.roles;
  auto usable = [&](int i, int j) { return g.in_range(i, j) && role_of(roles, g.kind(i, j)) != Role::kNoFlux; };
  const int n = static_cast<int>(sys.cells.size());
  out.assign(n, 0.0);
  AEROCROWD_PARALLEL_FOR
  for (int k = 0; k < n; ++k) {
    const int idx = sys.cells[k];
    const int i = g.col(idx);
    const int j = g.row(idx);
    const double qp = q[idx];
    double adv = 0.0;
    double diff = 0.0;
    for (int d = 0; d < 4; ++d) {
      const int ni = i + kDi[d];
      const int nj = j + kDj[d];
      if (!g.in_range(ni, nj)) continue;
      const int nb = g.index(ni, nj);
      const Role r = role_of(roles, g.kind(nb));
      const double f = outward_flux(g, state.face_u, state.face_v, i, j, d);
      if (f != 0.0 && r != Role::kNoFlux) {
        double qface;
        if (f > 0.0) {
          const int fi = i - kDi[d];
          const int fj = j - kDj[d];
          qface = limited(qp, q[nb], usable(fi, fj) ? q.values().data() + g.index(fi, fj) : nullptr);
        } else {
          const int fi = ni + kDi[d];
          const int fj = nj + kDj[d];
          qface = limited(q[nb], qp, usable(fi, fj) ? q.values().data() + g.index(fi, fj) : nullptr);
        }
        adv += spec.conservative ? f * qface : f * (qface - qp);
      }
      if (r == Role::kUnknown || r == Role::kFixed) diff += q[nb] - qp;
    }
    out[k] = -adv / h + spec.kappa * diff / (h * h) + source(idx);
  }
}

// Modified incomplete Cholesky of the 5-point operator diag = coupled,
// off-diagonal -1. Unknowns are numbered in grid order, so -x and -y
// neighbours precede a cell and +x, +y neighbours follow it.
class MicPreconditioner {
 public:
  explicit MicPreconditioner(const System& sys) : sys_(sys), inv_(sys.cells.size()) {
    constexpr double kTau = 0.97;
    constexpr double kSigma = 0.25;
    const int n = static_cast<int>(sys.cells.size());
    for (int k = 0; k < n; ++k) {
      const double diag = sys.coupled[k];
      double e = diag;
      for (int d : {1, 3}) {
        const int m = sys.nbr[k][d];
        if (m < 0) continue;
        const double pm = inv_[m];
        const int other = sys.nbr[m][d == 1 ? 2 : 0];  // m's other forward link
        e -= pm * pm * (1.0 + (other >= 0 ? kTau : 0.0));
      }
      if (e < kSigma * diag) e = diag;
      inv_[k] = diag > 0.0 ? 1.0 / std::sqrt(e) : 1.0;
    }
  }

  void operator()(std::span<const double> r, std::span<double> z) const {
    const int n = static_cast<int>(inv_.size());
    for (int k = 0; k < n; ++k) {
      double t = r[k];
      for (int d : {1, 3}) {
        const int m = sys_.nbr[k][d];
        if (m >= 0) t += inv_[m] * z[m];
      }
      z[k] = t * inv_[k];
    }
    for (int k = n - 1; k >= 0; --k) {
      double t = z[k];
      for (int d : {0, 2}) {
        const int m = sys_.nbr[k][d];
        if (m >= 0) t += inv_[k] * z[m];
      }
      z[k] = t * inv_[k];
    }
  }

 private:
  const System& sys_;
  std::vector<double> inv_;
};

// Solves (I - coeff * h^2 L) x = b over the unknowns; x enters as the guess.
KrylovResult helmholtz_solve(const System& sys, double coeff, const std::vector<double>& b, std::vector<double>& x,
                             const SchemeParams& scheme) {
  const int n = static_cast<int>(sys.cells.size());
  auto apply = [&](std::span<const double> in, std::span<double> out) {
    AEROCROWD_PARALLEL_FOR
    for (int k = 0; k < n; ++k) {
      double s = in[k] * (1.0 + coeff * sys.coupled[k]);
      for (int d = 0; d < 4; ++d) {
        const int m = sys.nbr[k][d];
        if (m >= 0) s -= coeff * in[m];
      }
      out[k] = s;
    }
  };
  return conjugate_gradient(apply, std::span<const double>(b), std::span<double>(x), scheme.poisson_tol,
                            scheme.poisson_max_iter);
}

// Explicit stages followed by the theta-implicit final stage. Returns the
// new unknown values in q.
int multistage(const Grid& g, const System& sys, const TransportSpec& spec, const FlowState& state,
               const ScalarField& gamma, const SchemeParams& scheme, double dt, ScalarField& q,
               const std::function<double(int)>& source, std::vector<ScalarField>* trace, const char* what) {
  const ScalarField qn = q;
  const int n = static_cast<int>(sys.cells.size());
  std::vector<double> r;
  for (int stage = 1; stage <= scheme.k_stages - 1; ++stage) {
    const double alpha = 1.0 / (scheme.k_stages + 1 - stage);
    transport_rhs(g, sys, spec, state, q, source, r);
    for (int k = 0; k < n; ++k) {
      const int idx = sys.cells[k];
      q[idx] = qn[idx] + alpha * gamma[idx] * dt * r[k];
    }
    if (trace) trace->push_back(q);
  }
  transport_rhs(g, sys, spec, state, q, source, r);
  for (double& v : r) v *= dt;
  int iterations = 0;
  std::vector<double> delta = r;
  const double coeff = scheme.theta * spec.kappa * dt / (g.h() * g.h());
  if (coeff > 0.0 && n > 0) {
    const KrylovResult res = helmholtz_solve(sys, coeff, r, delta, scheme);
    if (!res.converged) {
      std::ostringstream os;
      os << what << " implicit solve did not converge in " << res.iterations << " iterations (residual "
         << res.residual_inf << ")";
      throw SolverError(os.str());
    }
    iterations = res.iterations;
  }
  for (int k = 0; k < n; ++k) {
    const int idx = sys.cells[k];
    q[idx] = qn[idx] + delta[k];
  }
  return iterations;
}

// Cell gradient of a pressure-like field: outlet cells read as zero and
// no-flux neighbours mirror the centre value.
Vec2 pressure_gradient(const Grid& g, const ScalarField& p, int i, int j) {
  const double pc = p(i, j);
  auto value = [&](int a, int b) {
    if (!g.in_range(a, b)) return pc;
    switch (role_of(kPressureRoles, g.kind(a, b))) {
      case Role::kUnknown: return p(a, b);
      case Role::kFixed: return 0.0;
      default: return pc;
    }
  };
  const double inv = 1.0 / (2.0 * g.h());
  return {(value(i + 1, j) - value(i - 1, j)) * inv, (value(i, j + 1) - value(i, j - 1)) * inv};
}

// Face velocity between cells a and b (b after a along the axis). The
// pressure-smoothing term couples the face to the face pressure gradient.
double face_velocity(const Grid& g, const VectorField& v, const ScalarField& p, double rc, int a, int b, bool x_axis) {
  const CellKind ka = g.kind(a);
  const CellKind kb = g.kind(b);
  if (ka == CellKind::kWall || kb == CellKind::kWall) return 0.0;
  const ScalarField& comp = x_axis ? v.x : v.y;
  const bool fa = ka == CellKind::kFluid;
  const bool fb = kb == CellKind::kFluid;
  if (fa && fb) {
    double u = 0.5 * (comp[a] + comp[b]);
    if (rc > 0.0) {
      const Vec2 ga = pressure_gradient(g, p, g.col(a), g.row(a));
      const Vec2 gb = pressure_gradient(g, p, g.col(b), g.row(b));
      const double avg = 0.5 * (x_axis ? ga.x + gb.x : ga.y + gb.y);
      u += rc * (avg - (p[b] - p[a]) / g.h());
    }
    return u;
  }
  if (fa && kb == CellKind::kOutlet) return comp[a];
  if (fb && ka == CellKind::kOutlet) return comp[b];
  if (fa) return comp[b];
  if (fb) return comp[a];
  return 0.5 * (comp[a] + comp[b]);
}

template <class Fn>
void for_each_face(const Grid& g, Fn&& fn) {
  const int nx = g.nx();
  const int ny = g.ny();
  for (int j = 0; j < ny; ++j) {
    for (int i = 1; i < nx; ++i) fn(true, xface(g, i, j), g.index(i - 1, j), g.index(i, j));
  }
  for (int j = 1; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) fn(false, yface(g, i, j), g.index(i, j - 1), g.index(i, j));
  }
}

void copy_outlets(const Grid& g, FlowState& s) {
  for (int idx = 0; idx < g.size(); ++idx) {
    if (g.kind(idx) != CellKind::kOutlet) continue;
    const int i = g.col(idx);
    const int j = g.row(idx);
    Vec2 v;
    double T = 0.0, c = 0.0, tau = 0.0;
    int n = 0;
    for (int d = 0; d < 4; ++d) {
      const int ni = i + kDi[d];
      const int nj = j + kDj[d];
      if (!g.in_range(ni, nj)) continue;
      const int nb = g.index(ni, nj);
      const CellKind k = g.kind(nb);
      if (k != CellKind::kFluid && k != CellKind::kImmersed) continue;
      v += s.v.at(nb);
      T += s.T[nb];
      c += s.c[nb];
      tau += s.tau[nb];
      ++n;
    }
    s.p[idx] = 0.0;
    if (n == 0) continue;
    s.v.set(idx, v / n);
    s.T[idx] = T / n;
    s.c[idx] = c / n;
    s.tau[idx] = tau / n;
  }
}

bool all_finite(const ScalarField& f) {
  for (double v : f.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

void FluidProps::validate() const {
  if (!(rho > 0.0)) throw ConfigError("fluid.rho must be positive");
  if (!(mu > 0.0)) throw ConfigError("fluid.mu must be positive");
  if (!(cp > 0.0)) throw ConfigError("fluid.cp must be positive");
  if (!(k >= 0.0)) throw ConfigError("fluid.k must be non-negative");
  if (!(k_c >= 0.0)) throw ConfigError("fluid.k_c must be non-negative");
  if (!std::isfinite(beta) || !std::isfinite(g.x) || !std::isfinite(g.y) || !std::isfinite(T0)) {
    throw ConfigError("fluid: beta, g and T0 must be finite");
  }
}

void SchemeParams::validate() const {
  if (!(theta >= 0.5 && theta <= 1.0)) throw ConfigError("scheme.theta must lie in [0.5, 1]");
  if (k_stages < 1) throw ConfigError("scheme.k_stages must be at least 1");
  if (!(cfl > 0.0 && cfl <= k_stages)) throw ConfigError("scheme.cfl must lie in (0, k_stages]");
  if (!(poisson_tol > 0.0 && poisson_tol < 1.0)) throw ConfigError("scheme.poisson_tol must lie in (0, 1)");
  if (poisson_max_iter < 1) throw ConfigError("scheme.poisson_max_iter must be positive");
  if (!(v_floor > 0.0)) throw ConfigError("scheme.v_floor must be positive");
}

FlowState::FlowState(const Grid& grid, double initial_temperature)
    : v(grid),
      p(grid),
      T(grid, initial_temperature),
      c(grid),
      tau(grid),
      face_u(static_cast<size_t>(grid.nx() + 1) * grid.ny(), 0.0),
      face_v(static_cast<size_t>(grid.nx()) * (grid.ny() + 1), 0.0) {}

double gamma_factor(double re_h) { return std::min(1.0, re_h); }

FlowSolver::FlowSolver(const Grid& grid, FluidProps props, SchemeParams scheme, FlowBoundaryConditions bcs)
    : grid_(grid), props_(props), scheme_(scheme), bcs_(std::move(bcs)) {
  props_.validate();
  scheme_.validate();
  int max_inlet = -1;
  for (int idx = 0; idx < grid_.size(); ++idx) {
    if (grid_.kind(idx) == CellKind::kInlet) max_inlet = std::max(max_inlet, grid_.region(idx));
  }
  if (max_inlet >= static_cast<int>(bcs_.inlets.size())) {
    throw ConfigError("inlet " + std::to_string(max_inlet) + " has no boundary condition");
  }
  if (bcs_.reference_cell) {
    const int r = *bcs_.reference_cell;
    if (r < 0 || r >= grid_.size() || !grid_.is_fluid(r)) {
      throw ConfigError("reference pressure cell must be a fluid cell");
    }
  }
  if (grid_.count(CellKind::kOutlet) == 0 && !bcs_.reference_cell) {
    throw ConfigError("pressure level undetermined: no outlet and no reference pressure point");
  }
  double u_ref = 1.0;
  for (const auto& in : bcs_.inlets) u_ref = std::max(u_ref, norm(in.velocity));
  // A quarter of the advective time h/u_ref sits below the usual step, so
  // min(rc, dt) is then a constant and the steady state does not depend on dt.
  rc_coefficient_ = 0.25 * grid_.h() / u_ref;
}

TimestepInfo FlowSolver::compute_dt(const FlowState& state, double imposed_speed) const {
  double vmax = 0.0;
  for (int idx = 0; idx < grid_.size(); ++idx) {
    if (grid_.is_wall(idx)) continue;
    vmax = std::max(vmax, norm(state.v.at(idx)));
  }
  vmax = std::max(vmax, imposed_speed);
  TimestepInfo info;
  info.max_speed = vmax;
  info.dt = scheme_.cfl * grid_.h() / std::max(vmax, scheme_.v_floor);
  info.max_re_h = vmax * grid_.h() / props_.nu();
  return info;
}

void FlowSolver::apply_boundary_conditions(FlowState& state) const {
  for (int idx = 0; idx < grid_.size(); ++idx) {
    switch (grid_.kind(idx)) {
      case CellKind::kWall:
        state.v.set(idx, {});
        state.c[idx] = 0.0;
        state.tau[idx] = 0.0;
        break;
      case CellKind::kInlet: {
        const InletCondition& in = bcs_.inlets[grid_.region(idx)];
        state.v.set(idx, in.velocity);
        state.T[idx] = in.temperature;
        state.c[idx] = 0.0;
        state.tau[idx] = 0.0;
        break;
      }
      default: break;
    }
  }
  copy_outlets(grid_, state);
  refresh_boundary_faces(state);
}

void FlowSolver::sync_faces(FlowState& state) const {
  for_each_face(grid_, [&](bool x_axis, int f, int a, int b) {
    (x_axis ? state.face_u : state.face_v)[f] = face_velocity(grid_, state.v, state.p, rc_coefficient_, a, b, x_axis);
  });
}

void FlowSolver::refresh_boundary_faces(FlowState& state) const {
  for_each_face(grid_, [&](bool x_axis, int f, int a, int b) {
    const CellKind ka = grid_.kind(a);
    const CellKind kb = grid_.kind(b);
    auto imposed = [](CellKind k) {
      return k == CellKind::kWall || k == CellKind::kInlet || k == CellKind::kImmersed;
    };
    if (!imposed(ka) && !imposed(kb)) return;
    (x_axis ? state.face_u : state.face_v)[f] = face_velocity(grid_, state.v, state.p, 0.0, a, b, x_axis);
  });
}

ScalarField FlowSolver::gamma_field(const FlowState& state) const {
  ScalarField gamma(grid_);
  const double nu = props_.nu();
  for (int idx = 0; idx < grid_.size(); ++idx) gamma[idx] = gamma_factor(norm(state.v.at(idx)) * grid_.h() / nu);
  return gamma;
}

namespace {

VectorField momentum_forcing(const Grid& g, const FluidProps& props, const FlowState& state,
                             const FlowSources& sources) {
  VectorField s(g);
  const bool has_sv = sources.momentum.matches(g);
  for (int idx = 0; idx < g.size(); ++idx) {
    if (g.kind(idx) != CellKind::kFluid) continue;
    Vec2 f = -pressure_gradient(g, state.p, g.col(idx), g.row(idx));
    f -= props.beta * (state.T[idx] - props.T0) * props.g;
    if (has_sv) f += sources.momentum.at(idx);
    s.set(idx, f);
  }
  return s;
}

}  // namespace

VectorField FlowSolver::momentum_rhs(const FlowState& state, const FlowSources& sources, const VectorField& v) const {
  const System sys = build_system(grid_, kMomentumRoles);
  const VectorField forcing = momentum_forcing(grid_, props_, state, sources);
  const TransportSpec spec{&kMomentumRoles, props_.nu(), false};
  VectorField out(grid_);
  std::vector<double> r;
  transport_rhs(grid_, sys, spec, state, v.x, [&](int idx) { return forcing.x[idx]; }, r);
  for (size_t k = 0; k < sys.cells.size(); ++k) out.x[sys.cells[k]] = r[k];
  transport_rhs(grid_, sys, spec, state, v.y, [&](int idx) { return forcing.y[idx]; }, r);
  for (size_t k = 0; k < sys.cells.size(); ++k) out.y[sys.cells[k]] = r[k];
  return out;
}

VectorField FlowSolver::advective_diffusive_prediction(const FlowState& state, const FlowSources& sources, double dt,
                                                       StageTrace* trace, int* iterations) const {
  const System sys = build_system(grid_, kMomentumRoles);
  const VectorField forcing = momentum_forcing(grid_, props_, state, sources);
  const ScalarField gamma = gamma_field(state);
  const TransportSpec spec{&kMomentumRoles, props_.nu(), false};

  // The two components advance together stage by stage: each stage's
  // advection of one component uses the other only through the frozen face
  // fluxes, so they decouple.
  VectorField out = state.v;
  std::vector<ScalarField> trace_x, trace_y;
  int its = multistage(grid_, sys, spec, state, gamma, scheme_, dt, out.x,
                       [&](int idx) { return forcing.x[idx]; }, trace ? &trace_x : nullptr, "momentum");
  its += multistage(grid_, sys, spec, state, gamma, scheme_, dt, out.y, [&](int idx) { return forcing.y[idx]; },
                    trace ? &trace_y : nullptr, "momentum");
  if (trace) {
    trace->stages.clear();
    for (size_t s = 0; s < trace_x.size(); ++s) {
      VectorField stage;
      stage.x = std::move(trace_x[s]);
      stage.y = std::move(trace_y[s]);
      trace->stages.push_back(std::move(stage));
    }
  }
  if (iterations) *iterations = its;
  return out;
}

PressureResult FlowSolver::pressure_correction(const FlowState& state, const VectorField& v_star, double dt) const {
  const Grid& g = grid_;
  const double h = g.h();
  PressureResult result;
  result.face_u_star.assign(state.face_u.size(), 0.0);
  result.face_v_star.assign(state.face_v.size(), 0.0);
  // Smoothing time scale capped by dt; a larger one feeds a pressure
  // checkerboard next to immersed cells.
  for_each_face(g, [&](bool x_axis, int f, int a, int b) {
    (x_axis ? result.face_u_star : result.face_v_star)[f] =
        face_velocity(g, v_star, state.p, std::min(rc_coefficient_, dt), a, b, x_axis);
  });

  const System sys = build_system(g, kPressureRoles);
  const int n = static_cast<int>(sys.cells.size());

  // Components of the fluid region without an outlet neighbour float: their
  // level is fixed by the reference cell or by a zero mean.
  std::vector<int> comp(n, -1);
  std::vector<char> anchored;
  std::vector<std::vector<int>> members;
  for (int seed = 0; seed < n; ++seed) {
    if (comp[seed] >= 0) continue;
    const int id = static_cast<int>(members.size());
    members.emplace_back();
    anchored.push_back(0);
    std::vector<int> stack{seed};
    comp[seed] = id;
    while (!stack.empty()) {
      const int k = stack.back();
      stack.pop_back();
      members[id].push_back(k);
      int unknown_nbrs = 0;
      for (int d = 0; d < 4; ++d) {
        const int m = sys.nbr[k][d];
        if (m < 0) continue;
        ++unknown_nbrs;
        if (comp[m] < 0) {
          comp[m] = id;
          stack.push_back(m);
        }
      }
      if (sys.coupled[k] > unknown_nbrs) anchored[id] = 1;
    }
  }
  std::vector<int> floating;
  for (size_t id = 0; id < members.size(); ++id) {
    if (!anchored[id]) floating.push_back(static_cast<int>(id));
  }
  auto project = [&](std::span<double> x) {
    for (int id : floating) {
      double s = 0.0;
      for (int k : members[id]) s += x[k];
      const double mean = s / members[id].size();
      for (int k : members[id]) x[k] -= mean;
    }
  };

  std::vector<double> b(n);
  for (int k = 0; k < n; ++k) {
    const int idx = sys.cells[k];
    double net = 0.0;
    for (int d = 0; d < 4; ++d) {
      net += outward_flux(g, result.face_u_star, result.face_v_star, g.col(idx), g.row(idx), d);
    }
    result.divergence_before = std::max(result.divergence_before, std::abs(net) / h);
    b[k] = -h * net;
  }
  project(b);

  auto apply = [&](std::span<const double> in, std::span<double> out) {
    AEROCROWD_PARALLEL_FOR
    for (int k = 0; k < n; ++k) {
      double s = in[k] * sys.coupled[k];
      for (int d = 0; d < 4; ++d) {
        const int m = sys.nbr[k][d];
        if (m >= 0) s -= in[m];
      }
      out[k] = s;
    }
  };
  const MicPreconditioner mic(sys);
  std::vector<double> psi(n, 0.0);
  result.solve = conjugate_gradient(apply, std::span<const double>(b), std::span<double>(psi), scheme_.poisson_tol,
                                    scheme_.poisson_max_iter, std::cref(mic), project);
  if (!result.solve.converged) {
    std::ostringstream os;
    os << "pressure Poisson solve did not converge in " << result.solve.iterations << " iterations (residual "
       << result.solve.residual_inf << " vs rhs " << result.solve.rhs_inf << ")";
    throw SolverError(os.str());
  }

  for (int id : floating) {
    double shift = 0.0;
    if (bcs_.reference_cell && sys.local[*bcs_.reference_cell] >= 0 &&
        comp[sys.local[*bcs_.reference_cell]] == id) {
      shift = psi[sys.local[*bcs_.reference_cell]];
    } else {
      double s = 0.0;
      for (int k : members[id]) s += psi[k];
      shift = s / members[id].size();
    }
    for (int k : members[id]) psi[k] -= shift;
  }

  result.increment = ScalarField(g);
  result.p_next = ScalarField(g);
  for (int k = 0; k < n; ++k) {
    const int idx = sys.cells[k];
    result.increment[idx] = psi[k];
    result.p_next[idx] = state.p[idx] + psi[k] / dt;
  }
  return result;
}

void FlowSolver::velocity_correction(FlowState& state, const VectorField& v_star, const PressureResult& pressure,
                                     double dt) const {
  (void)dt;
  const Grid& g = grid_;
  const double h = g.h();
  const ScalarField& psi = pressure.increment;
  state.face_u = pressure.face_u_star;
  state.face_v = pressure.face_v_star;
  auto level = [&](int idx) -> std::optional<double> {
    switch (role_of(kPressureRoles, g.kind(idx))) {
      case Role::kUnknown: return psi[idx];
      case Role::kFixed: return 0.0;
      default: return std::nullopt;
    }
  };
  for_each_face(g, [&](bool x_axis, int f, int a, int b) {
    if (g.kind(a) != CellKind::kFluid && g.kind(b) != CellKind::kFluid) return;
    const auto la = level(a);
    const auto lb = level(b);
    if (!la || !lb) return;
    (x_axis ? state.face_u : state.face_v)[f] -= (*lb - *la) / h;
  });
  state.v = v_star;
  for (int idx = 0; idx < g.size(); ++idx) {
    if (g.kind(idx) != CellKind::kFluid) continue;
    const Vec2 grad = pressure_gradient(g, psi, g.col(idx), g.row(idx));
    state.v.set(idx, v_star.at(idx) - grad);
  }
  for (int idx = 0; idx < g.size(); ++idx) {
    state.p[idx] = g.kind(idx) == CellKind::kFluid ? pressure.p_next[idx] : 0.0;
  }
  // Immersed cells carry the mean of their fluid neighbours so a cell a
  // pedestrian leaves starts near the surrounding pressure level.
  for (int idx = 0; idx < g.size(); ++idx) {
    if (g.kind(idx) != CellKind::kImmersed) continue;
    double sum = 0.0;
    int count = 0;
    for (int d = 0; d < 4; ++d) {
      const int ni = g.col(idx) + kDi[d];
      const int nj = g.row(idx) + kDj[d];
      if (g.in_range(ni, nj) && g.kind(ni, nj) == CellKind::kFluid) {
        sum += state.p(ni, nj);
        ++count;
      }
    }
    if (count > 0) state.p[idx] = sum / count;
  }
}

int FlowSolver::advance_temperature(FlowState& state, const ScalarField* heat, double dt) const {
  const System sys = build_system(grid_, kTemperatureRoles);
  const ScalarField gamma = gamma_field(state);
  const TransportSpec spec{&kTemperatureRoles, props_.thermal_diffusivity(), false};
  const double scale = 1.0 / (props_.rho * props_.cp);
  const bool has = heat && heat->matches(grid_);
  return multistage(grid_, sys, spec, state, gamma, scheme_, dt, state.T,
                    [&](int idx) { return has ? (*heat)[idx] * scale : 0.0; }, nullptr, "temperature");
}

ScalarUpdate FlowSolver::advance_scalar(FlowState& state, const ScalarField* sources, double dt) const {
  const System sys = build_system(grid_, kScalarRoles);
  const ScalarField gamma = gamma_field(state);
  const TransportSpec spec{&kScalarRoles, props_.k_c, true};
  const bool has = sources && sources->matches(grid_);
  ScalarUpdate update;
  update.iterations = multistage(grid_, sys, spec, state, gamma, scheme_, dt, state.c,
                                 [&](int idx) { return has ? (*sources)[idx] : 0.0; }, nullptr, "scalar");
  const double area = grid_.h() * grid_.h();
  for (int idx : sys.cells) {
    if (state.c[idx] < 0.0) {
      update.clamped_mass += -state.c[idx] * area;
      state.c[idx] = 0.0;
    }
  }
  return update;
}

void FlowSolver::advance_age_of_air(FlowState& state, double dt) const {
  const System sys = build_system(grid_, kScalarRoles);
  const ScalarField gamma = gamma_field(state);
  const TransportSpec spec{&kScalarRoles, 0.0, false};
  multistage(grid_, sys, spec, state, gamma, scheme_, dt, state.tau, [](int) { return 1.0; }, nullptr, "age of air");
}

StepDiagnostics FlowSolver::advance(FlowState& state, const FlowSources& sources, double dt) const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw SolverError("flow step: non-positive time step");
  StepDiagnostics diag;
  diag.dt = dt;
  refresh_boundary_faces(state);
  const VectorField v_star = advective_diffusive_prediction(state, sources, dt, nullptr, &diag.momentum_iterations);
  const PressureResult pressure = pressure_correction(state, v_star, dt);
  diag.pressure_iterations = pressure.solve.iterations;
  diag.pressure_residual = pressure.solve.residual_inf;
  velocity_correction(state, v_star, pressure, dt);
  diag.temperature_iterations = advance_temperature(state, sources.heat.matches(grid_) ? &sources.heat : nullptr, dt);
  const ScalarUpdate sc = advance_scalar(state, sources.scalar.matches(grid_) ? &sources.scalar : nullptr, dt);
  diag.scalar_iterations = sc.iterations;
  diag.clamped_mass = sc.clamped_mass;
  advance_age_of_air(state, dt);
  copy_outlets(grid_, state);
  state.t += dt;
  ++state.step;

  for (const ScalarField* f : {&state.v.x, &state.v.y, &state.p, &state.T, &state.c, &state.tau}) {
    if (!all_finite(*f)) {
      std::ostringstream os;
      os << "flow field became non-finite at step " << state.step << " (t = " << state.t << ")";
      throw SolverError(os.str());
    }
  }
  diag.max_divergence = max_divergence(state);
  const TimestepInfo info = compute_dt(state);
  diag.max_speed = info.max_speed;
  diag.max_re_h = info.max_re_h;
  return diag;
}

StepDiagnostics FlowSolver::step(FlowState& state, const FlowSources& sources, double dt) const {
  apply_boundary_conditions(state);
  return advance(state, sources, dt);
}

double FlowSolver::max_divergence(const FlowState& state) const {
  double m = 0.0;
  for (int idx = 0; idx < grid_.size(); ++idx) {
    if (grid_.kind(idx) != CellKind::kFluid) continue;
    double net = 0.0;
    for (int d = 0; d < 4; ++d) net += outward_flux(grid_, state.face_u, state.face_v, grid_.col(idx), grid_.row(idx), d);
    m = std::max(m, std::abs(net) / grid_.h());
  }
  return m;
}

double FlowSolver::total_scalar(const FlowState& state) const {
  double s = 0.0;
  for (int idx = 0; idx < grid_.size(); ++idx) {
    if (role_of(kScalarRoles, grid_.kind(idx)) == Role::kUnknown) s += state.c[idx];
  }
  return s * grid_.h() * grid_.h();
}

}  // namespace aerocrowd
