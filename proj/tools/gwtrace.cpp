// gwtrace: command-line front end.

#include <CLI11.hpp>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <unistd.h>
#include <unordered_set>

#include "gwtrace/errors.hpp"
#include "gwtrace/local_time_tree.hpp"
#include "gwtrace/reduction.hpp"
#include "gwtrace/rwre.hpp"
#include "gwtrace/scaling_lab.hpp"

using namespace gwtrace;
namespace fs = std::filesystem;

namespace {

struct Options {
  std::string law = "binary";
  std::optional<double> lambda;
  std::optional<std::string> env;
  std::optional<std::uint64_t> n;
  std::uint64_t replicas = 1;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<unsigned> cap;
  std::string out = ".";
  std::string config;
  bool allow_noncritical = false;
  bool quick = false;
  bool law_given = false;
};

// Writes next to the target and renames, so readers never see a partial file.
void write_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + fmt::format(".tmp{}", ::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error(fmt::format("cannot write {}", tmp.string()));
    f << text;
    f.flush();
    if (!f) throw std::runtime_error(fmt::format("cannot write {}", tmp.string()));
  }
  fs::rename(tmp, path);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument(fmt::format("cannot read config file '{}'", path));
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path out_file(const Options& o, const std::string& name) { return fs::path(o.out) / name; }

double lambda_of(const Options& o, const OffspringLaw& law) { return o.lambda.value_or(law.mean()); }

void print_gates(const Report& r) {
  for (const auto& g : r.gates)
    fmt::print("{:<4} {:<40} estimate={:.6g} target={:.6g} tol={:.3g}\n", g.pass ? "ok" : "FAIL", g.name, g.estimate,
               g.target, g.tolerance);
}

int sample_tree(const Options& o) {
  const auto law = OffspringLaw::parse(o.law);
  const unsigned cap = o.cap.value_or(10);
  const std::uint64_t seed = o.seed.value_or(1);
  std::optional<EnvironmentLaw> env;
  if (o.env) env = EnvironmentLaw::parse(*o.env, law, lambda_of(o, law));
  for (std::uint64_t r = 0; r < o.replicas; ++r) {
    const auto rng = Stream::for_replica(seed, r, substream::growth);
    const GrownTree tree = env ? sample_environment(*env, cap, rng).tree : grow_tree(law, rng, cap);
    const std::string label = env ? env->descriptor() : law.descriptor();
    write_atomic(out_file(o, fmt::format("tree_{}.txt", r)), dump_tree(tree, label, seed));
  }
  return 0;
}

int walk(const Options& o) {
  const auto law = OffspringLaw::parse(o.law);
  const double lambda = lambda_of(o, law);
  const std::uint64_t n = o.n.value_or(1000), seed = o.seed.value_or(1);
  for (std::uint64_t r = 0; r < o.replicas; ++r) {
    WalkRun run;
    if (o.env) {
      const auto env = EnvironmentLaw::parse(*o.env, law, lambda);
      run.tree.reset(growth_key_of(Stream::for_replica(seed, r, substream::growth)));
      run.tree.enable_potential();
      EnvironmentGrowth growth(env);
      run.path = run_walk_on(run.tree, growth, env.kernel(), n, Stream::for_replica(seed, r, substream::walk));
    } else {
      WalkOptions opt;
      opt.allow_noncritical = o.allow_noncritical;
      opt.replica = r;
      run = run_walk(law, lambda, n, seed, opt);
    }
    std::unordered_set<VertexId> seen;
    for (auto v : run.path.vertices)
      if (v != kArtificialParent) seen.insert(v);
    nlohmann::ordered_json j;
    j["schema"] = 1;
    j["seed"] = seed;
    j["replica"] = r;
    j["n_steps"] = n;
    j["R_n"] = seen.size();
    j["tau_count"] = excursion_times(run.path).size();
    write_atomic(out_file(o, fmt::format("path_{}.csv", r)), path_csv(run.path));
    write_atomic(out_file(o, fmt::format("walk_{}.json", r)), j.dump(2) + "\n");
  }
  return 0;
}

int local_times(const Options& o) {
  const auto law = OffspringLaw::parse(o.law);
  const double m = law.mean();
  const unsigned K = o.cap.value_or(200);
  const auto res = spectral_residuals(m, K);
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["m"] = m;
  j["K"] = K;
  j["residual_left"] = res.residual_left;
  j["residual_right"] = res.residual_right;
  j["pi_mass"] = res.pi_mass;
  j["tail_left"] = res.tail_left;
  j["tail_right"] = res.tail_right;
  write_atomic(out_file(o, "spectral.json"), j.dump(2) + "\n");
  Stream rng = Stream::for_replica(o.seed.value_or(1), 0, substream::sampler);
  write_atomic(out_file(o, "chain_trace.csv"), chain_trace_csv(m, o.n.value_or(1000), rng));
  return 0;
}

int reduce(const Options& o) {
  const auto law = OffspringLaw::parse(o.law);
  const double lambda = lambda_of(o, law);
  check_bias(law, lambda, false);
  const std::uint64_t seed = o.seed.value_or(1), budget = o.n.value_or(10'000'000);
  GwGrowth growth(law);
  std::vector<TypedReducedTree> rs;
  int status = 0;
  for (std::uint64_t r = 0; r < o.replicas; ++r) {
    GrownTree tree;
    tree.reset(growth_key_of(Stream::for_replica(seed, r, substream::growth)));
    Walker w(tree, growth, WalkKernel::biased(lambda), Stream::for_replica(seed, r, substream::walk));
    std::vector<VertexId> ex;
    if (!run_excursion(w, budget, ex)) {
      fmt::print(stderr, "replica {}: excursion longer than {} steps, skipped\n", r, budget);
      status = 3;
      continue;
    }
    const auto T = build_T(tree, ex);
    const auto tr = build_reduced_r(T, first_hit_ranks(T, ex));
    const auto tw = build_reduced_w(tr, T, ex);
    write_atomic(out_file(o, fmt::format("reduced_r_{}.txt", r)), reduced_dump(tr));
    write_atomic(out_file(o, fmt::format("reduced_w_{}.txt", r)), reduced_dump(tw));
    write_atomic(out_file(o, fmt::format("height_w_{}.csv", r)), height_csv(restricted_height(std::span(&tw, 1)).H));
    rs.push_back(tr);
  }
  // the T^(r) forest of all replicas in order
  const auto h = restricted_height(rs);
  write_atomic(out_file(o, "height_r_forest.csv"), height_csv(h.H));
  write_atomic(out_file(o, "height_f_forest.csv"), height_csv(h.H_f));
  return status;
}

template <class Config>
void apply_common(Config& c, const Options& o) {
  if (!o.config.empty()) c.apply_text(read_file(o.config));
  if (o.quick) c.make_quick();
  if (o.law_given) c.law = o.law;
  if (o.lambda) c.lambda = *o.lambda;
  else if (o.law_given) c.lambda = OffspringLaw::parse(c.law).mean();
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = std::max(1u, *o.threads);
}

int verify(const Options& o) {
  VerifyConfig c;
  apply_common(c, o);
  const auto report = run_verify(c);
  print_gates(report);
  write_atomic(out_file(o, "verify_report.json"), report.to_json());
  const bool ok = report.all_pass();
  fmt::print("{}\n", ok ? "all gates pass" : "some gates FAIL");
  return ok ? 0 : 1;
}

int rwre_verify(const Options& o) {
  RwreConfig c;
  apply_common(c, o);
  if (o.env) c.env = *o.env;
  const auto report = run_rwre_verify(c);
  print_gates(report);
  const auto env = EnvironmentLaw::parse(c.env, OffspringLaw::parse(c.law), c.lambda);
  write_atomic(out_file(o, "psi_profile.json"),
               psi_json(psi_profile(env, c.psi_reps, group_seed(c.seed, 210), c.threads)));
  write_atomic(out_file(o, "rwre_report.json"), report.to_json());
  const bool ok = report.all_pass();
  fmt::print("{}\n", ok ? "all gates pass" : "some gates FAIL");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Biased walks on Galton-Watson trees: simulation and verification"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--law", o.law, "offspring law: binary, unary, point:<d>, geometric:<mean>, pmf:<p0>,<p1>,...")
        ->each([&](const std::string&) { o.law_given = true; });
    sub->add_option("--lambda", o.lambda, "bias (defaults to the offspring mean)");
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--out", o.out, "output directory");
  };

  auto* st = app.add_subcommand("sample-tree", "dump Galton-Watson trees or environments");
  common(st);
  st->add_option("--cap", o.cap, "generation cap");
  st->add_option("--replicas", o.replicas)->check(CLI::PositiveNumber);
  st->add_option("--env", o.env, "biased or lognormal:<s2>");

  auto* wk = app.add_subcommand("walk", "run walks and dump their paths");
  common(wk);
  wk->add_option("--n", o.n, "steps");
  wk->add_option("--replicas", o.replicas)->check(CLI::PositiveNumber);
  wk->add_option("--env", o.env, "walk in an environment: biased or lognormal:<s2>");
  wk->add_flag("--allow-noncritical", o.allow_noncritical, "permit lambda != m");

  auto* lt = app.add_subcommand("local-times", "spectral report and a trace of the spine chain");
  common(lt);
  lt->add_option("--cap", o.cap, "truncation K of the mean matrix");
  lt->add_option("--n", o.n, "chain steps");

  auto* rd = app.add_subcommand("reduce", "reduced trees of single excursions");
  common(rd);
  rd->add_option("--n", o.n, "step budget per excursion");
  rd->add_option("--replicas", o.replicas)->check(CLI::PositiveNumber);

  auto* vf = app.add_subcommand("verify", "every gate of the biased-walk suite");
  common(vf);
  vf->add_option("--threads", o.threads);
  vf->add_option("--config", o.config, "key=value file; flags win");
  vf->add_flag("--quick", o.quick, "small sample sizes");

  auto* rv = app.add_subcommand("rwre-verify", "every gate of the random-environment suite");
  common(rv);
  rv->add_option("--threads", o.threads);
  rv->add_option("--config", o.config, "key=value file; flags win");
  rv->add_option("--env", o.env, "biased or lognormal:<s2>");
  rv->add_flag("--quick", o.quick, "small sample sizes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (st->parsed()) return sample_tree(o);
    if (wk->parsed()) return walk(o);
    if (lt->parsed()) return local_times(o);
    if (rd->parsed()) return reduce(o);
    if (vf->parsed()) return verify(o);
    if (rv->parsed()) return rwre_verify(o);
  } catch (const RegimeError& e) {
    fmt::print(stderr, "regime error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
  return 0;
}
