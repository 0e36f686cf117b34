#include "snuts/nuts.hpp"

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "snuts/error.hpp"

namespace snuts {

std::string to_string(MassAdaptation m) {
  return m == MassAdaptation::Diagonal ? "diagonal" : "off";
}

void NutsConfig::validate() const {
  if (warmup && *warmup < 0) throw ConfigError("warmup must be >= 0");
  if (warmup && adapt_stepsize && *warmup > 0 && *warmup < 20)
    throw ConfigError("warmup must be >= 20 when the step size is adapted");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (chains < 1) throw ConfigError("chains must be >= 1");
  if (max_depth < 1 || max_depth > 15) throw ConfigError("max_depth must be in [1, 15]");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must be in (0, 1)");
  if (!(max_energy_error > 0.0)) throw ConfigError("max_energy_error must be positive");
  if (stepsize < 0.0) throw ConfigError("stepsize must be >= 0");
  if (!adapt_stepsize && stepsize <= 0.0)
    throw ConfigError("a fixed step size is required when adaptation is off");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
}

Rng chain_rng(std::uint64_t seed, int chain) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(chain)};
  return Rng(seq);
}

// ---------------------------------------------------------------------------
// Integrator and transition

namespace {

double kinetic(const Vector& p, const Vector& inv_mass) {
  return 0.5 * p.cwiseProduct(p).dot(inv_mass);
}

double hamiltonian(const PhaseState& z, const Vector& inv_mass) {
  const double h = -z.lp + kinetic(z.p, inv_mass);
  return std::isnan(h) ? std::numeric_limits<double>::infinity() : h;
}

void sample_momentum(Vector& p, const Vector& inv_mass, Rng& rng) {
  boost::random::normal_distribution<double> norm;
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = norm(rng) / std::sqrt(inv_mass[i]);
}

double uniform(Rng& rng) {
  boost::random::uniform_01<double> u;
  return u(rng);
}

double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

bool no_u_turn(const Vector& p_sharp_minus, const Vector& p_sharp_plus, const Vector& rho) {
  return p_sharp_plus.dot(rho) > 0.0 && p_sharp_minus.dot(rho) > 0.0;
}

class TreeBuilder {
 public:
  TreeBuilder(GradientTarget& target, const Vector& inv_mass, const NutsSettings& s, Rng& rng,
              double eps, double h0)
      : target_(target), inv_mass_(inv_mass), s_(s), rng_(rng), eps_(eps), h0_(h0) {}

  // Extends the trajectory from z by 2^depth steps in direction `sign`.
  bool build(int depth, PhaseState& z, PhaseState& z_propose, Vector& p_sharp_beg,
             Vector& p_sharp_end, Vector& rho, Vector& p_beg, Vector& p_end, int sign,
             double& log_sum_weight) {
    if (depth == 0) {
      leapfrog(target_, z, sign * eps_, inv_mass_);
      ++n_leapfrog;
      const double h = hamiltonian(z, inv_mass_);
      if (h - h0_ > s_.max_energy_error) divergent = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0_ - h);
      sum_metro_prob += (h0_ - h > 0.0) ? 1.0 : std::exp(h0_ - h);
      z_propose = z;
      p_sharp_beg = inv_mass_.cwiseProduct(z.p);
      p_sharp_end = p_sharp_beg;
      rho += z.p;
      p_beg = z.p;
      p_end = p_beg;
      return !divergent;
    }

    const Eigen::Index d = z.q.size();
    double lsw_init = -std::numeric_limits<double>::infinity();
    Vector p_init_end(d), p_sharp_init_end(d);
    Vector rho_init = Vector::Zero(d);
    if (!build(depth - 1, z, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg,
               p_init_end, sign, lsw_init))
      return false;

    PhaseState z_propose_final = z;
    double lsw_final = -std::numeric_limits<double>::infinity();
    Vector p_final_beg(d), p_sharp_final_beg(d);
    Vector rho_final = Vector::Zero(d);
    if (!build(depth - 1, z, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final,
               p_final_beg, p_end, sign, lsw_final))
      return false;

    const double lsw_subtree = log_sum_exp(lsw_init, lsw_final);
    log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);
    if (lsw_final > lsw_subtree) {
      z_propose = z_propose_final;
    } else if (uniform(rng_) < std::exp(lsw_final - lsw_subtree)) {
      z_propose = z_propose_final;
    }

    const Vector rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = no_u_turn(p_sharp_beg, p_sharp_end, rho_subtree);
    persist = persist && no_u_turn(p_sharp_beg, p_sharp_final_beg, rho_init + p_final_beg);
    persist = persist && no_u_turn(p_sharp_init_end, p_sharp_end, rho_final + p_init_end);
    return persist;
  }

  int n_leapfrog = 0;
  double sum_metro_prob = 0.0;
  bool divergent = false;

 private:
  GradientTarget& target_;
  const Vector& inv_mass_;
  const NutsSettings& s_;
  Rng& rng_;
  double eps_;
  double h0_;
};

}  // namespace

void leapfrog(GradientTarget& target, PhaseState& z, double eps, const Vector& inv_mass) {
  z.p += 0.5 * eps * z.grad;
  z.q += eps * inv_mass.cwiseProduct(z.p);
  z.lp = target.log_density_gradient(z.q, z.grad);
  z.p += 0.5 * eps * z.grad;
}

TransitionStats nuts_transition(GradientTarget& target, PhaseState& z, double eps,
                                const Vector& inv_mass, const NutsSettings& s, Rng& rng) {
  const Eigen::Index d = z.q.size();
  z.p.resize(d);
  sample_momentum(z.p, inv_mass, rng);

  PhaseState z_fwd = z, z_bck = z, z_sample = z, z_propose = z;
  Vector p_fwd_fwd = z.p, p_fwd_bck = z.p, p_bck_fwd = z.p, p_bck_bck = z.p;
  Vector p_sharp_fwd_fwd = inv_mass.cwiseProduct(z.p);
  Vector p_sharp_fwd_bck = p_sharp_fwd_fwd, p_sharp_bck_fwd = p_sharp_fwd_fwd,
         p_sharp_bck_bck = p_sharp_fwd_fwd;
  Vector rho = z.p;
  double log_sum_weight = 0.0;
  const double h0 = hamiltonian(z, inv_mass);

  TreeBuilder tb(target, inv_mass, s, rng, eps, h0);
  int depth = 0;
  while (depth < s.max_depth) {
    Vector rho_fwd = Vector::Zero(d), rho_bck = Vector::Zero(d);
    bool valid = false;
    double lsw_subtree = -std::numeric_limits<double>::infinity();
    if (uniform(rng) > 0.5) {
      rho_bck = rho;
      p_bck_fwd = p_fwd_bck;
      p_sharp_bck_fwd = p_sharp_fwd_bck;
      PhaseState w = z_fwd;
      valid = tb.build(depth, w, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck,
                       p_fwd_fwd, +1, lsw_subtree);
      z_fwd = std::move(w);
    } else {
      rho_fwd = rho;
      p_fwd_bck = p_bck_fwd;
      p_sharp_fwd_bck = p_sharp_bck_fwd;
      PhaseState w = z_bck;
      valid = tb.build(depth, w, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd,
                       p_bck_bck, -1, lsw_subtree);
      z_bck = std::move(w);
    }
    if (!valid) break;
    ++depth;

    if (lsw_subtree > log_sum_weight) {
      z_sample = z_propose;
    } else if (uniform(rng) < std::exp(lsw_subtree - log_sum_weight)) {
      z_sample = z_propose;
    }
    log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

    rho = rho_bck + rho_fwd;
    bool persist = no_u_turn(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
    persist = persist && no_u_turn(p_sharp_bck_bck, p_sharp_fwd_bck, rho_bck + p_fwd_bck);
    persist = persist && no_u_turn(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_fwd + p_bck_fwd);
    if (!persist) break;
  }

  TransitionStats st;
  st.leapfrog = tb.n_leapfrog;
  st.depth = depth;
  st.divergent = tb.divergent;
  st.accept = tb.n_leapfrog > 0 ? tb.sum_metro_prob / tb.n_leapfrog : 0.0;
  z = std::move(z_sample);
  st.energy = hamiltonian(z, inv_mass);
  return st;
}

double initial_stepsize(GradientTarget& target, const PhaseState& z, const Vector& inv_mass,
                        Rng& rng, double eps0) {
  const double log_half = std::log(0.5);
  double eps = eps0;
  auto delta_h = [&](double e) {
    PhaseState w = z;
    w.p.resize(z.q.size());
    sample_momentum(w.p, inv_mass, rng);
    const double h0 = hamiltonian(w, inv_mass);
    leapfrog(target, w, e, inv_mass);
    return h0 - hamiltonian(w, inv_mass);
  };
  const int direction = delta_h(eps) > log_half ? 1 : -1;
  for (;;) {
    const double dh = delta_h(eps);
    if (direction == 1 && !(dh > log_half)) break;
    if (direction == -1 && !(dh < log_half)) break;
    eps = direction == 1 ? 2.0 * eps : 0.5 * eps;
    if (eps > 1e7) throw SamplingError("initial_stepsize: step size diverged; posterior may be improper");
    if (eps == 0.0) throw SamplingError("initial_stepsize: step size vanished; check the model");
  }
  return eps;
}

// ---------------------------------------------------------------------------
// Adaptation

void DualAveraging::restart(double eps0) {
  mu_ = std::log(10.0 * eps0);
  counter_ = 0.0;
  s_bar_ = 0.0;
  x_bar_ = 0.0;
}

double DualAveraging::learn(double accept_stat) {
  counter_ += 1.0;
  const double a = std::min(1.0, accept_stat);
  const double eta = 1.0 / (counter_ + t0_);
  s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - a);
  const double x = mu_ - s_bar_ * std::sqrt(counter_) / gamma_;
  const double x_eta = std::pow(counter_, -kappa_);
  x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
  return std::exp(x);
}

double DualAveraging::final_stepsize() const { return std::exp(x_bar_); }

WindowSchedule::WindowSchedule(int num_warmup, int init_buffer, int term_buffer, int base_window)
    : num_warmup_(num_warmup),
      init_buffer_(init_buffer),
      term_buffer_(term_buffer),
      base_window_(base_window) {
  if (num_warmup < 20) {
    active_ = false;
  } else if (init_buffer + base_window + term_buffer > num_warmup) {
    shortened_ = true;
    init_buffer_ = static_cast<int>(0.15 * num_warmup);
    term_buffer_ = static_cast<int>(0.1 * num_warmup);
    base_window_ = num_warmup - (init_buffer_ + term_buffer_);
  }
  window_size_ = base_window_;
  next_window_ = init_buffer_ + window_size_ - 1;
}

bool WindowSchedule::in_window() const {
  return active_ && counter_ >= init_buffer_ && counter_ < num_warmup_ - term_buffer_ &&
         counter_ != num_warmup_;
}

bool WindowSchedule::end_of_window() const {
  return active_ && counter_ == next_window_ && counter_ != num_warmup_;
}

void WindowSchedule::compute_next_window() {
  if (next_window_ == num_warmup_ - term_buffer_ - 1) return;
  window_size_ *= 2;
  next_window_ = counter_ + window_size_;
  if (next_window_ != num_warmup_ - term_buffer_ - 1) {
    const int boundary = next_window_ + 2 * window_size_;
    if (boundary >= num_warmup_ - term_buffer_) next_window_ = num_warmup_ - term_buffer_ - 1;
  }
}

void WindowSchedule::advance() {
  if (end_of_window()) compute_next_window();
  ++counter_;
}

std::vector<int> WindowSchedule::window_ends() const {
  WindowSchedule w(*this);
  w.counter_ = 0;
  w.window_size_ = base_window_;
  w.next_window_ = init_buffer_ + base_window_ - 1;
  std::vector<int> ends;
  for (int i = 0; i < num_warmup_; ++i) {
    if (w.end_of_window()) ends.push_back(i);
    w.advance();
  }
  return ends;
}

void VarianceEstimator::add(const Vector& x) {
  ++n_;
  const Vector delta = x - mean_;
  mean_ += delta / n_;
  m2_ += delta.cwiseProduct(x - mean_);
}

Vector VarianceEstimator::regularized_variance() const {
  const double n = n_;
  const Vector var = n_ > 1 ? Vector(m2_ / (n - 1.0)) : Vector::Ones(mean_.size());
  return (n / (n + 5.0)) * var + Vector::Constant(var.size(), 1e-3 * 5.0 / (n + 5.0));
}

void VarianceEstimator::restart() {
  n_ = 0;
  mean_.setZero();
  m2_.setZero();
}

// ---------------------------------------------------------------------------
// Chains

int ChainResult::divergences() const {
  return static_cast<int>(std::count(divergent.begin(), divergent.end(), 1));
}

double ChainResult::mean_leapfrog() const {
  if (leapfrog.empty()) return 0.0;
  return std::accumulate(leapfrog.begin(), leapfrog.end(), 0.0) / static_cast<double>(leapfrog.size());
}

double ChainResult::mean_accept() const {
  if (accept.empty()) return 0.0;
  return std::accumulate(accept.begin(), accept.end(), 0.0) / static_cast<double>(accept.size());
}

ChainResult run_chain(ModelPtr model, PreconditionerPtr precond, const Vector& q0,
                      const NutsConfig& cfg, int warmup, MassAdaptation adapt, int chain) {
  using clock = std::chrono::steady_clock;
  ChainResult r;
  r.chain = chain;
  r.seed = cfg.seed;
  Rng rng = chain_rng(cfg.seed, chain);
  PreconditionedTarget target(TransformedTarget(model, precond));
  const int d = target.dim();

  PhaseState z;
  z.q = precond->forward(q0);
  z.grad.resize(d);
  z.lp = target.log_density_gradient(z.q, z.grad);
  if (!std::isfinite(z.lp) || !z.grad.allFinite())
    throw SamplingError("run_chain: log density or gradient not finite at the initial point");

  Vector inv_mass = Vector::Ones(d);
  const NutsSettings settings{cfg.max_depth, cfg.max_energy_error};
  double eps = cfg.stepsize > 0.0 ? cfg.stepsize : initial_stepsize(target, z, inv_mass, rng);
  DualAveraging da(cfg.delta);
  da.restart(eps);
  WindowSchedule windows(warmup);
  if (adapt == MassAdaptation::Diagonal && warmup > 0) {
    if (!windows.active())
      r.notes.push_back("warmup shorter than 20 iterations: no mass adaptation");
    else if (windows.shortened())
      r.notes.push_back("warmup too short for the default windows: using a 15%/75%/10% split");
  }
  VarianceEstimator estimator(d);

  auto t0 = clock::now();
  for (int i = 0; i < warmup; ++i) {
    const TransitionStats st = nuts_transition(target, z, eps, inv_mass, settings, rng);
    if (st.divergent) ++r.warmup_divergences;
    if (cfg.adapt_stepsize) eps = da.learn(st.accept);
    if (adapt == MassAdaptation::Diagonal && windows.active()) {
      if (windows.in_window()) estimator.add(z.q);
      if (windows.end_of_window()) {
        windows.advance();
        inv_mass = estimator.regularized_variance();
        estimator.restart();
        eps = initial_stepsize(target, z, inv_mass, rng, eps);
        da.restart(eps);
      } else {
        windows.advance();
      }
    }
  }
  if (cfg.adapt_stepsize && warmup > 0) eps = da.final_stepsize();
  r.warmup_seconds = std::chrono::duration<double>(clock::now() - t0).count();

  const int n = cfg.iterations;
  r.draws.resize(n, d);
  if (cfg.keep_transformed) r.transformed_draws.resize(n, d);
  r.lp.resize(n);
  r.leapfrog.reserve(n);
  r.depth.reserve(n);
  r.divergent.reserve(n);
  r.energy.reserve(n);
  r.accept.reserve(n);
  t0 = clock::now();
  for (int i = 0; i < n; ++i) {
    const TransitionStats st = nuts_transition(target, z, eps, inv_mass, settings, rng);
    r.draws.row(i) = precond->backward(z.q).transpose();
    if (cfg.keep_transformed) r.transformed_draws.row(i) = z.q.transpose();
    r.lp[i] = z.lp;
    r.leapfrog.push_back(st.leapfrog);
    r.depth.push_back(st.depth);
    r.divergent.push_back(st.divergent ? 1 : 0);
    r.energy.push_back(st.energy);
    r.accept.push_back(st.accept);
    if (st.depth >= cfg.max_depth) ++r.max_depth_hits;
  }
  r.sampling_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  if (!r.draws.allFinite()) throw SamplingError("run_chain: non-finite draws");
  r.stepsize = eps;
  r.inv_mass = inv_mass;
  return r;
}

std::vector<ChainResult> run_chains(ModelPtr model, PreconditionerPtr precond,
                                    const std::vector<Vector>& inits, const NutsConfig& cfg,
                                    int warmup, MassAdaptation adapt) {
  const int chains = static_cast<int>(inits.size());
  std::vector<ChainResult> out(static_cast<std::size_t>(chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chains));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int c = next++; c < chains; c = next++) {
      try {
        out[c] = run_chain(model, precond, inits[c], cfg, warmup, adapt, c);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  const int jobs = std::max(1, std::min(cfg.jobs, chains));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace snuts
