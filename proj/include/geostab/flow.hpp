#ifndef GEOSTAB_FLOW_HPP
#define GEOSTAB_FLOW_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "geostab/expr.hpp"
#include "geostab/map.hpp"

namespace geostab::flow {

using num::Matrix;
using num::Vec;

// Dynamical system as a vector flow: dx/dt = X(x). The right-hand side is a
// generic-scalar map so the variational (perturbation) equation can draw its
// Jacobian from forward-mode duals, and so semisprays obtained by pointwise
// Hessian solves (Lagrangian systems) fit the same interface as
// expression-defined flows.
class VectorFlowSystem {
 public:
  VectorFlowSystem() = default;
  VectorFlowSystem(num::MapPtr rhs, int second_order_config_dim = -1);

  static VectorFlowSystem from_expressions(std::vector<expr::Expression> components,
                                           int second_order_config_dim = -1);

  int dim() const { return rhs_ ? rhs_->out_dim() : 0; }
  bool second_order() const { return config_dim_ > 0; }
  int config_dim() const { return config_dim_; }
  const num::VectorMap& rhs() const { return *rhs_; }

  Vec eval(std::span<const double> x) const { return num::eval(*rhs_, x); }
  Matrix jacobian_at(std::span<const double> x) const { return num::jacobian(*rhs_, x); }

 private:
  num::MapPtr rhs_;
  int config_dim_ = -1;
};

// Semispray lift of a second-order system: state (x, u), with the first n
// components of the flow identically u^a and the last n the accelerations.
VectorFlowSystem lift_second_order(int n, std::vector<expr::Expression> accel);

struct EventRecord {
  std::string kind;
  double param = 0.0;
  Vec state;
};

struct EventSpec {
  std::string kind;
  std::function<double(double, std::span<const double>)> fn;
  int direction = 0;      // +1 up-crossings, -1 down-crossings, 0 both
  bool terminal = false;
};

enum class Method { RK4, RK45 };

struct IntegratorSettings {
  Method method = Method::RK45;
  double fixed_step = 1e-3;   // RK4 only
  double abs_tol = 1e-10;
  double rel_tol = 1e-9;
  long max_steps = 4000000;
  std::vector<double> sample_times;  // empty: record every accepted step
  std::vector<EventSpec> events;
};

struct Trajectory {
  std::string param_name = "t";
  int dim = 0;
  std::vector<double> params;
  std::vector<Vec> states;
  std::vector<std::vector<Vec>> frames;  // aligned with params when present
  std::vector<EventRecord> events;
  bool terminated_by_event = false;

  const Vec& final_state() const { return states.back(); }
  double final_param() const { return params.back(); }
};

Trajectory integrate(const VectorFlowSystem& system, Vec x0, double t0, double t1,
                     const IntegratorSettings& settings);

// Jointly integrates the flow and the linearized perturbation equation
// d(xi)/dt = (dX/dx) xi for each frame vector. The callback runs every
// renorm_interval time units and may rescale the frame in place; this is the
// hook the Lyapunov estimators use.
using RenormCallback =
    std::function<void(double t, std::span<const double> state, std::vector<Vec>& frame)>;

Trajectory variational_integrate(const VectorFlowSystem& system, Vec x0,
                                 std::vector<Vec> frame0, double t0, double t1,
                                 const IntegratorSettings& settings,
                                 double renorm_interval = 0.0,
                                 const RenormCallback& renorm = {});

// ---- low-level driver (shared by geometry's parallel transport) ----
namespace detail {

using Rhs = std::function<void(double, std::span<const double>, std::span<double>)>;

struct DriverHooks {
  std::vector<double> sample_times;                                 // sorted ascending
  bool record_steps = false;                                        // record accepted steps too
  std::function<void(double, std::span<const double>)> record;      // required
  std::vector<double> mutate_times;                                 // sorted ascending
  std::function<void(double, std::span<double>)> mutate;            // state rewrite hook
  const std::vector<EventSpec>* events = nullptr;
  std::function<void(const EventRecord&)> on_event;
  bool* terminated = nullptr;
};

void integrate_driver(const Rhs& rhs, int dim, Vec y0, double t0, double t1,
                      const IntegratorSettings& settings, const DriverHooks& hooks);

}  // namespace detail

}  // namespace geostab::flow

#endif
