#pragma once

#include <optional>
#include <vector>

#include "aerocrowd/grid.hpp"
#include "aerocrowd/krylov.hpp"

namespace aerocrowd {

struct FluidProps {
  double rho = 1.2;         ///< kg/m^3
  double mu = 1.85e-5;      ///< kg/(m s)
  double beta = 1.0 / 293;  ///< 1/K
  double cp = 1005.0;       ///< J/(kg K)
  double k = 0.026;         ///< W/(m K)
  double k_c = 2.0e-5;      ///< pathogen diffusivity, m^2/s
  Vec2 g{0.0, 0.0};         ///< gravity, m/s^2; zero for plan-view domains
  double T0 = 20.0;         ///< reference temperature, C

  double nu() const { return mu / rho; }
  double thermal_diffusivity() const { return k / (rho * cp); }
  /// Throws ConfigError on non-physical values.
  void validate() const;
};

struct SchemeParams {
  double theta = 0.5;
  int k_stages = 4;
  double cfl = 1.0;
  double poisson_tol = 1e-8;
  int poisson_max_iter = 5000;
  double v_floor = 0.01;  ///< m/s

  void validate() const;
};

/// Fixed state of one inlet region (indexed by the grid's inlet number).
struct InletCondition {
  Vec2 velocity;
  double temperature = 18.0;
};

struct FlowBoundaryConditions {
  std::vector<InletCondition> inlets;
  /// Cell pinned to p = 0 when no outlet fixes the pressure level.
  std::optional<int> reference_cell;
};

/// Kinematic pressure p/rho is stored in p. Face velocities are the
/// divergence-free normal fluxes that advect every transported quantity:
/// face_u[j*(nx+1)+i] sits between cells (i-1,j) and (i,j), positive +x;
/// face_v[j*nx+i] sits between cells (i,j-1) and (i,j), positive +y.
struct FlowState {
  VectorField v;
  ScalarField p;
  ScalarField T;
  ScalarField c;
  ScalarField tau;
  std::vector<double> face_u;
  std::vector<double> face_v;
  double t = 0.0;
  long step = 0;

  FlowState() = default;
  FlowState(const Grid& grid, double initial_temperature);
};

/// Volumetric sources; fields default to zero.
struct FlowSources {
  VectorField momentum;  ///< m/s^2
  ScalarField heat;      ///< W/m^3
  ScalarField scalar;    ///< units/(m^3 s)

  FlowSources() = default;
  explicit FlowSources(const Grid& grid) : momentum(grid), heat(grid), scalar(grid) {}
};

struct TimestepInfo {
  double dt = 0.0;
  double max_speed = 0.0;
  double max_re_h = 0.0;
};

/// Explicit-stage iterates v^1..v^{k-1} of one prediction.
struct StageTrace {
  std::vector<VectorField> stages;
};

struct PressureResult {
  ScalarField p_next;
  ScalarField increment;  ///< dt * (p^{n+1} - p^n)
  std::vector<double> face_u_star;
  std::vector<double> face_v_star;
  KrylovResult solve;
  double divergence_before = 0.0;  ///< max |div| of the predicted face fluxes
};

struct ScalarUpdate {
  int iterations = 0;
  double clamped_mass = 0.0;  ///< sum of removed negative c * h^2
};

struct StepDiagnostics {
  double dt = 0.0;
  int momentum_iterations = 0;
  int pressure_iterations = 0;
  int temperature_iterations = 0;
  int scalar_iterations = 0;
  double pressure_residual = 0.0;
  double max_divergence = 0.0;
  double max_speed = 0.0;
  double max_re_h = 0.0;
  double clamped_mass = 0.0;
};

double gamma_factor(double re_h);

/// Projection-scheme solver on a collocated cell-centred grid. The grid is
/// referenced, not owned; immersed cells may change between steps.
class FlowSolver {
 public:
  /// Throws ConfigError when a fluid region has neither an outlet nor the
  /// reference cell and inlets feed it, or on invalid parameters.
  FlowSolver(const Grid& grid, FluidProps props, SchemeParams scheme, FlowBoundaryConditions bcs);

  const Grid& grid() const { return grid_; }
  const FluidProps& props() const { return props_; }
  const SchemeParams& scheme() const { return scheme_; }
  const FlowBoundaryConditions& boundary_conditions() const { return bcs_; }

  /// Advective limit over non-wall cells; `imposed_speed` adds speeds that
  /// will be written into the field this step (sneezes, pedestrians).
  TimestepInfo compute_dt(const FlowState& state, double imposed_speed = 0.0) const;

  /// Inlets: fixed v, T, c = 0, tau = 0. Outlets: zero-gradient copies, p = 0.
  /// Walls: v = 0. Boundary faces are refreshed to match.
  void apply_boundary_conditions(FlowState& state) const;

  /// Rebuilds every face velocity from cell values. For initialisation or
  /// after cell velocities were set by hand.
  void sync_faces(FlowState& state) const;

  /// Faces touching non-fluid cells take the imposed values.
  void refresh_boundary_faces(FlowState& state) const;

  /// Explicit right-hand side -v.grad(v) + nu lap(v) + s' at fluid cells.
  VectorField momentum_rhs(const FlowState& state, const FlowSources& sources, const VectorField& v) const;
  ScalarField gamma_field(const FlowState& state) const;

  VectorField advective_diffusive_prediction(const FlowState& state, const FlowSources& sources, double dt,
                                             StageTrace* trace = nullptr, int* iterations = nullptr) const;
  PressureResult pressure_correction(const FlowState& state, const VectorField& v_star, double dt) const;
  /// Writes v^{n+1}, face fluxes and p^{n+1} into state.
  void velocity_correction(FlowState& state, const VectorField& v_star, const PressureResult& pressure,
                           double dt) const;

  int advance_temperature(FlowState& state, const ScalarField* heat, double dt) const;
  ScalarUpdate advance_scalar(FlowState& state, const ScalarField* sources, double dt) const;
  void advance_age_of_air(FlowState& state, double dt) const;

  /// Full step on a state whose boundary and immersed values are in place.
  StepDiagnostics advance(FlowState& state, const FlowSources& sources, double dt) const;
  /// apply_boundary_conditions followed by advance.
  StepDiagnostics step(FlowState& state, const FlowSources& sources, double dt) const;

  /// Max-norm of the face-flux divergence over fluid cells.
  double max_divergence(const FlowState& state) const;
  /// Sum of c h^2 over the transport cells (fluid and immersed).
  double total_scalar(const FlowState& state) const;

 private:
  const Grid& grid_;
  FluidProps props_;
  SchemeParams scheme_;
  FlowBoundaryConditions bcs_;
  double rc_coefficient_;  ///< fixed face pressure-smoothing time scale, s
};

}  // namespace aerocrowd
