// h2sketch: construct, verify, update and benchmark sketched H2 matrices.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "h2sketch/bench.hpp"
#include "h2sketch/io.hpp"

using namespace h2sketch;

namespace {

struct Options {
  RunConfig run;
  std::string out_json, out_csv, save_h2, save_tree, save_points;
  bool fixed = false;
  bool no_times = false;
  bool bootstrap = false;
  Index n_min = 4096;
  Index update_rank = 32;
};

void add_common(CLI::App* app, Options& o) {
  static const std::map<std::string, KernelKind> kernels{
      {"cov", KernelKind::cov}, {"ie", KernelKind::ie}, {"dense-file", KernelKind::dense_file}};
  static const std::map<std::string, PointMode> modes{{"grid", PointMode::grid},
                                                      {"random", PointMode::random}};
  auto& c = o.run.construction;
  app->add_option("--kernel", o.run.kernel, "cov | ie | dense-file")
      ->transform(CLI::CheckedTransformer(kernels, CLI::ignore_case));
  app->add_option("--n", o.run.n, "number of points");
  app->add_option("--dim", o.run.dim, "point dimension")->check(CLI::Range(1, 3));
  app->add_option("--points", o.run.points, "grid | random")
      ->transform(CLI::CheckedTransformer(modes, CLI::ignore_case));
  app->add_option("--corr-length", o.run.corr_length, "covariance correlation length");
  app->add_option("--wavenumber", o.run.wavenumber, "Helmholtz wavenumber");
  app->add_option("--eta", c.eta, "admissibility parameter");
  app->add_option("--leaf-size", c.leaf_size, "leaf cluster size");
  app->add_option("--eps", c.eps, "relative tolerance");
  app->add_option("--sample-block", c.sample_block, "columns per sampling round");
  app->add_option("--max-samples", c.max_samples, "adaptive sampling limit");
  app->add_flag("--fixed-samples", o.fixed, "single round of samples, no adaptivity");
  app->add_option("--rank", c.representative_rank, "fixed mode: representative rank");
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--dense-file", o.run.dense_file, "matrix for the dense-file kernel");
  app->add_option("--out-json", o.out_json, "write stats / report as JSON");
  app->add_flag("--no-times", o.no_times, "leave timings out of the JSON");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << text << '\n';
}

nlohmann::ordered_json memory_json(const MemoryReport& m) {
  return {{"basis", m.basis},       {"transfer", m.transfer}, {"coupling", m.coupling},
          {"dense", m.dense},       {"indices", m.indices},   {"total", m.total()}};
}

int cmd_construct(Options& o) {
  Problem p = make_problem(o.run);
  if (!o.save_tree.empty()) write_text(o.save_tree, tree_to_json(p.tree));
  if (!o.save_points.empty()) write_points(o.save_points, p.points);
  auto res = construct(*p.sampler, *p.evaluator, p.tree, p.mtree, o.run.construction);
  const auto mem = memory_report(res.matrix);
  std::printf("n=%lld levels=%d samples=%lld norm=%.6e time=%.1f ms memory=%zu bytes\n",
              static_cast<long long>(o.run.n), p.tree.level_count(),
              static_cast<long long>(res.stats.total_samples), res.stats.norm_estimate,
              res.stats.total_ms, mem.total());
  std::printf("  memory: basis %zu transfer %zu coupling %zu dense %zu indices %zu\n", mem.basis,
              mem.transfer, mem.coupling, mem.dense, mem.indices);
  for (const auto& l : res.stats.levels)
    std::printf("  level %d: rank %lld..%lld rounds %d\n", l.level, static_cast<long long>(l.rank_min),
                static_cast<long long>(l.rank_max), l.rounds);
  if (!o.save_h2.empty()) save_h2_file(o.save_h2, res.matrix);
  if (!o.out_json.empty()) write_text(o.out_json, stats_to_json(res.stats, !o.no_times));
  return 0;
}

int cmd_verify(Options& o) {
  const auto r = run_verify(o.run);
  std::printf("rel_error=%.3e matvec_error=%.3e entry_error=%.3e\n", r.rel_error, r.matvec_error,
              r.entry_error);
  if (!o.out_json.empty()) {
    nlohmann::ordered_json j{{"rel_error", r.rel_error},
                             {"matvec_error", r.matvec_error},
                             {"entry_error", r.entry_error},
                             {"memory", memory_json(r.memory)}};
    if (r.stats) j["stats"] = nlohmann::ordered_json::parse(stats_to_json(*r.stats, !o.no_times));
    write_text(o.out_json, j.dump(1));
  }
  return 0;
}

int cmd_update(Options& o) {
  const auto r = run_update(o.run, o.update_rank);
  std::printf("rel_error=%.3e rel_error_kernel=%.3e rank_growth=%.3f samples=%lld\n", r.rel_error,
              r.rel_error_kernel, r.rank_growth, static_cast<long long>(r.stats.total_samples));
  if (!o.out_json.empty()) {
    nlohmann::ordered_json j{{"rel_error", r.rel_error},
                             {"rel_error_kernel", r.rel_error_kernel},
                             {"rank_growth", r.rank_growth},
                             {"base", nlohmann::ordered_json::parse(stats_to_json(r.base_stats, !o.no_times))},
                             {"updated", nlohmann::ordered_json::parse(stats_to_json(r.stats, !o.no_times))}};
    write_text(o.out_json, j.dump(1));
  }
  return 0;
}

int cmd_bench(Options& o) {
  std::vector<Index> ns;
  for (Index n = o.n_min; n <= o.run.n; n *= 2) ns.push_back(n);
  if (ns.empty()) throw std::invalid_argument("bench: --n-min exceeds --n");
  const auto rows = run_bench(o.run, ns, o.bootstrap);
  if (!o.out_csv.empty()) {
    std::ofstream os(o.out_csv);
    if (!os) throw std::runtime_error("cannot open " + o.out_csv);
    write_bench_csv(os, rows);
  } else {
    write_bench_csv(std::cout, rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sketching-based H2 matrix construction"};
  app.require_subcommand(1);
  Options o;

  auto* construct_cmd = app.add_subcommand("construct", "build an H2 matrix");
  auto* verify_cmd = app.add_subcommand("verify", "build (or load) and compare with the dense matrix");
  auto* update_cmd = app.add_subcommand("update", "recompress the matrix plus a random low-rank term");
  auto* bench_cmd = app.add_subcommand("bench", "scaling sweep, CSV output");
  for (auto* c : {construct_cmd, verify_cmd, update_cmd, bench_cmd}) add_common(c, o);
  construct_cmd->add_option("--save-h2", o.save_h2, "write the matrix");
  construct_cmd->add_option("--save-tree", o.save_tree, "write the cluster tree as JSON");
  construct_cmd->add_option("--save-points", o.save_points, "write the point set");
  verify_cmd->add_option("--load-h2", o.run.load_h2, "verify a saved matrix");
  update_cmd->add_option("--update-rank", o.update_rank, "rank of the added term");
  bench_cmd->add_option("--out-csv", o.out_csv, "write the sweep as CSV");
  bench_cmd->add_option("--n-min", o.n_min, "first size of the doubling sweep");
  bench_cmd->add_flag("--bootstrap", o.bootstrap, "time recompression of a precomputed H2 matrix");

  CLI11_PARSE(app, argc, argv);
  o.run.construction.adaptive = !o.fixed;

  try {
    if (construct_cmd->parsed()) return cmd_construct(o);
    if (verify_cmd->parsed()) return cmd_verify(o);
    if (update_cmd->parsed()) return cmd_update(o);
    return cmd_bench(o);
  } catch (const ConstructionError& e) {
    std::fprintf(stderr, "construction failed at level %d: %s\n", e.level(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
