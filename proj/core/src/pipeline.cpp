#include "snuts/pipeline.hpp"

#include <boost/random/uniform_real_distribution.hpp>

#include <chrono>
#include <numeric>
#include <sstream>

#include "snuts/error.hpp"

namespace snuts {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::StanDefault: return "stan_default";
    case Mode::Auto: return "snuts-auto";
    case Mode::Diag: return "snuts-diag";
    case Mode::Dense: return "snuts-dense";
    case Mode::Sparse: return "snuts-sparse";
    case Mode::ElaNuts: return "ela-nuts";
    case Mode::ElaSnuts: return "ela-snuts";
  }
  return "unknown";
}

Mode parse_mode(const std::string& s) {
  for (const Mode m : all_modes())
    if (s == to_string(m)) return m;
  if (s == "auto") return Mode::Auto;
  if (s == "diag") return Mode::Diag;
  if (s == "dense") return Mode::Dense;
  if (s == "sparse") return Mode::Sparse;
  if (s == "stan-default" || s == "nuts") return Mode::StanDefault;
  throw ConfigError("unknown mode '" + s + "'");
}

std::vector<Mode> all_modes() {
  return {Mode::StanDefault, Mode::Auto, Mode::Diag, Mode::Dense,
          Mode::Sparse,      Mode::ElaNuts, Mode::ElaSnuts};
}

int RunResult::total_divergences() const {
  int n = 0;
  for (const auto& c : chains) n += c.divergences();
  return n;
}

double RunResult::mean_leapfrog() const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& c : chains) {
    s += std::accumulate(c.leapfrog.begin(), c.leapfrog.end(), 0.0);
    n += c.leapfrog.size();
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

std::vector<Vector> uniform_inits(int dim, int chains, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32), 0x1417u};
  Rng rng(seq);
  boost::random::uniform_real_distribution<double> unif(-2.0, 2.0);
  std::vector<Vector> out;
  for (int c = 0; c < chains; ++c) {
    Vector v(dim);
    for (int i = 0; i < dim; ++i) v[i] = unif(rng);
    out.push_back(v);
  }
  return out;
}

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

std::uint64_t init_seed(std::uint64_t seed) { return seed * 0x9E3779B97F4A7C15ull + 0x5eed; }

void run_stan_default(const ModelPtr& m, const NutsConfig& cfg, RunResult& r) {
  r.preconditioner = "identity";
  r.warmup = cfg.warmup_or(kStanWarmup);
  r.adapt_mass = cfg.adapt_mass.value_or(MassAdaptation::Diagonal);
  r.parameter_names = m->parameter_names();
  r.inits = uniform_inits(m->dim(), cfg.chains, cfg.seed);
  auto p = std::make_shared<Preconditioner>(Preconditioner::identity(m->dim()));
  r.chains = run_chains(m, p, r.inits, cfg, r.warmup, r.adapt_mass);
}

void run_preconditioned(const ModelPtr& m, const PosteriorApprox& a, const PreconditionerPtr& p,
                        const NutsConfig& cfg, RunResult& r) {
  r.preconditioner = p->name();
  r.warmup = cfg.warmup_or(kSnutsWarmup);
  r.adapt_mass = cfg.adapt_mass.value_or(MassAdaptation::Off);
  r.parameter_names = m->parameter_names();
  const Matrix draws = precision_sample(a, cfg.chains, init_seed(cfg.seed));
  r.inits.clear();
  for (int c = 0; c < cfg.chains; ++c) r.inits.push_back(draws.row(c).transpose());
  r.chains = run_chains(m, p, r.inits, cfg, r.warmup, r.adapt_mass);
}

std::string laplace_summary(const PosteriorApprox& a) {
  std::ostringstream os;
  os << "laplace: " << (a.converged ? "converged" : "not converged") << " after "
     << a.outer_iterations << " outer and " << a.inner_iterations << " inner iterations";
  if (a.jittered) os << "; Q jittered by " << a.jitter;
  os << "; Q nnz " << a.Q.nnz() << ", L nnz " << a.factor.nnz() << ", sparsity "
     << sparsity_percent(a.Q) << "%";
  return os.str();
}

}  // namespace

RunResult sample_snuts(ModelPtr model, Mode mode, const NutsConfig& cfg,
                       const PipelineOptions& opts) {
  if (!model) throw ConfigError("sample_snuts: null model");
  cfg.validate();
  RunResult r;
  r.model_name = model->name();
  r.mode = mode;
  r.config = cfg;

  if (mode == Mode::StanDefault) {
    r.trace.push_back("stan_default: identity metric, diagonal mass adaptation");
    run_stan_default(model, cfg, r);
  } else {
    PosteriorApprox a;
    try {
      a = laplace_approximate(model, opts.laplace);
    } catch (const Error& e) {
      if (mode != Mode::Auto) throw;
      r.fallback = true;
      r.trace.push_back(std::string("laplace failed: ") + e.what());
      r.trace.push_back("FALLBACK: no Q available, running stan_default");
      run_stan_default(model, cfg, r);
    }
    if (!r.fallback) {
      r.timings.optimize = a.optimize_seconds;
      r.timings.q_assembly = a.q_seconds;
      r.timings.factorize = a.factorize_seconds;
      r.trace.push_back(laplace_summary(a));
      const auto t0 = clock_type::now();

      if (mode == Mode::ElaNuts || mode == Mode::ElaSnuts) {
        const ModelPtr mm = marginal_model(model, a, opts.laplace);
        if (mode == Mode::ElaNuts) {
          r.trace.push_back("ela-nuts: stan_default on the Laplace marginal over theta");
          r.timings.select = seconds_since(t0);
          run_stan_default(mm, cfg, r);
        } else {
          const PosteriorApprox ma = marginal_approx(a);
          Selection s = build_auto(&ma, *mm, opts.selector);
          r.condition = s.report;
          for (auto& line : s.trace) r.trace.push_back("ela-snuts: " + line);
          r.timings.select = seconds_since(t0);
          run_preconditioned(mm, ma, s.preconditioner, cfg, r);
        }
      } else {
        PreconditionerPtr p;
        if (mode == Mode::Auto) {
          Selection s = build_auto(&a, *model, opts.selector);
          r.condition = s.report;
          for (auto& line : s.trace) r.trace.push_back(line);
          p = s.preconditioner;
        } else {
          if (a.Q.dim() <= 500) r.condition = condition_report(a, opts.selector.dense_cap);
          if (mode == Mode::Diag) p = std::make_shared<Preconditioner>(build_diagonal(a));
          if (mode == Mode::Dense)
            p = std::make_shared<Preconditioner>(build_dense(a, opts.selector.dense_cap));
          if (mode == Mode::Sparse) p = std::make_shared<Preconditioner>(build_sparse(a));
          r.trace.push_back("preconditioner fixed by mode: " + p->name());
        }
        r.timings.select = seconds_since(t0);
        run_preconditioned(model, a, p, cfg, r);
      }
      r.approx = std::move(a);
    }
  }
  for (const auto& c : r.chains) {
    r.timings.warmup += c.warmup_seconds;
    r.timings.sampling += c.sampling_seconds;
    for (const auto& note : c.notes) r.trace.push_back("chain " + std::to_string(c.chain) + ": " + note);
  }
  return r;
}

}  // namespace snuts
