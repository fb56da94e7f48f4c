// Copyright 2026 The heinfer Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// heinfer: encrypted actor-network inference on the simulated slot VM.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "heinfer/fixtures.hpp"
#include "heinfer/layers.hpp"
#include "heinfer/oracle.hpp"
#include "heinfer/reference.hpp"
#include "heinfer/weights.hpp"

namespace {

using namespace heinfer;

constexpr int kExitCheckFailed = 1;
constexpr int kExitFormat = 2;
constexpr int kExitDepth = 3;

const std::vector<std::string> kBlocks = {kConvolutionBlock, kLinearBlock, kGymBlock};

struct Globals {
  std::size_t vm_n = 256;
  int depth_budget = 40;
  double noise_sigma = 0.0;
  bool literal_rotate_sum = false;
  std::uint64_t seed = 1;
  std::string strategy = "spectral";
  bool timing = false;

  VmConfig vm(std::uint64_t offset = 0) const {
    VmConfig c;
    c.slots = vm_n;
    c.depth_budget = depth_budget;
    c.noise_sigma = noise_sigma;
    c.literal_rotate_sum = literal_rotate_sum;
    c.seed = seed + offset;
    c.validate();
    return c;
  }

  RunOptions run(bool diagnostics) const {
    RunOptions o;
    o.strategy = strategy == "per-pair" ? ConvStrategy::per_pair : ConvStrategy::spectral;
    o.diagnostics = diagnostics;
    return o;
  }

  std::string echo() const {
    std::ostringstream s;
    s << "N=" << vm_n << " depth_budget=" << depth_budget << " noise_sigma=" << noise_sigma
      << " rotate_sum=" << (literal_rotate_sum ? "literal" : "tree") << " strategy=" << strategy
      << " seed=" << seed;
    return s.str();
  }
};

std::string fmt(double v, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

std::size_t thread_count(std::size_t jobs) {
  std::size_t n = 1;
  if (const char* env = std::getenv("HEINFER_THREADS")) {
    try {
      n = std::max<long>(1, std::stol(env));
    } catch (const std::exception&) {
      throw ConfigError("HEINFER_THREADS must be a positive integer");
    }
  } else {
    n = std::max(1u, std::thread::hardware_concurrency());
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

/// Runs job(i) for i in [0, count) on up to HEINFER_THREADS threads.
template <typename Job>
void parallel_for(std::size_t count, Job job) {
  const std::size_t threads = thread_count(count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < count; i += threads) job(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

Matrix read_grid(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open input '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(f, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw FormatError("input '" + path + "': not a number: '" + tok + "'");
      }
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("input '" + path + "' is empty");
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols) throw FormatError("input '" + path + "' has ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), m.data.begin() + static_cast<long>(r * m.cols));
  }
  return m;
}

ModelSpec load_model(const std::string& path) { return from_store(WeightStore::load(path)); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write '" + path + "'");
  f << text;
}

/// Block-level MAE of one inference against the oracle trace.
std::vector<double> block_mae(const BlockOutputs& fhe, const oracle::Trace& ref) {
  return {oracle::mae(flatten(fhe.conv), flatten(ref.conv)), oracle::mae(fhe.linear, ref.linear),
          oracle::mae(fhe.action, ref.action)};
}

std::string ledger_csv(const CostLedger& ledger, const std::vector<double>* mae,
                       const std::vector<double>* seconds) {
  std::ostringstream s;
  s << "block,mults_ct_ct,mults_ct_pt,rotations,adds,bootstraps";
  if (mae) s << ",mae";
  if (seconds) s << ",seconds";
  s << "\n";
  auto row = [&](const std::string& label, const OpCounts& c, std::size_t i) {
    s << label << "," << c.mults_ct_ct << "," << c.mults_ct_pt << "," << c.rotations << ","
      << c.adds << "," << c.bootstraps;
    if (mae) s << "," << (i < mae->size() ? fmt((*mae)[i]) : "");
    if (seconds) s << "," << fmt((*seconds)[i], 4);
  };
  for (std::size_t i = 0; i < kBlocks.size(); ++i) {
    row(kBlocks[i], ledger.block(kBlocks[i]), i);
    s << "\n";
  }
  row("Total", ledger.total(), kBlocks.size());
  s << "\n";
  return s.str();
}

// ---------------------------------------------------------------------------
// make-weights
// ---------------------------------------------------------------------------

struct MakeWeightsArgs {
  std::string arch = "student2";
  std::size_t filters = 0;
  std::size_t calibration = 16;
  std::string out;
};

int cmd_make_weights(const Globals& g, const MakeWeightsArgs& a) {
  Architecture arch = a.filters > 0 ? Architecture::student2_with_filters(a.filters)
                                    : Architecture::by_name(a.arch);
  const ModelSpec m = random_model(arch, g.seed, a.calibration);
  to_store(m).save(a.out);
  std::cout << "wrote " << a.out << " (" << m.name << ", " << m.layers.size() << " layers)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

struct InferArgs {
  std::string weights;
  std::string input;
  bool random = false;
  std::string csv;
};

Matrix input_for(const ModelSpec& m, const std::string& path, std::uint64_t seed, std::size_t index) {
  if (!path.empty()) {
    Matrix img = read_grid(path);
    if (img.rows != m.input_rows || img.cols != m.input_cols) {
      throw FormatError("input '" + path + "' is " + std::to_string(img.rows) + "x" +
                        std::to_string(img.cols) + ", model expects " + std::to_string(m.input_rows) +
                        "x" + std::to_string(m.input_cols));
    }
    return img;
  }
  return synthetic_batch(index + 1, m.input_rows, m.input_cols, seed).back();
}

int cmd_infer(const Globals& g, const InferArgs& a) {
  if (a.input.empty() && !a.random) throw ConfigError("infer needs --input or --random");
  const ModelSpec m = load_model(a.weights);
  const Matrix img = input_for(m, a.input, g.seed, 0);
  SlotVm vm(g.vm());
  const auto t0 = std::chrono::steady_clock::now();
  const RunResult r = run_model(vm, m, img, g.run(true));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto mae = block_mae(*r.intermediates, oracle::run_model(m, img));

  std::cout << "model: " << m.name << " (" << g.echo() << ")\n";
  std::cout << "action:";
  for (double v : r.action) std::cout << " " << fmt(v, 8);
  std::cout << "\nlevels consumed: " << r.levels_consumed << "\n";
  std::vector<double> seconds(kBlocks.size() + 1, 0.0);
  seconds.back() = secs;
  const std::string table = ledger_csv(r.ledger, &mae, g.timing ? &seconds : nullptr);
  std::cout << table;
  if (!a.csv.empty()) write_text(a.csv, table);
  return 0;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

struct CompareArgs {
  std::string weights;
  std::vector<std::string> inputs;
  std::size_t batch = 8;
  bool check = false;
  bool linear_only = false;
  std::string csv;
};

int cmd_compare(const Globals& g, const CompareArgs& a) {
  ModelSpec m = load_model(a.weights);
  if (a.linear_only) m = linearized(m);
  const std::size_t count = a.inputs.empty() ? a.batch : a.inputs.size();
  if (count == 0) throw ConfigError("compare needs at least one input");

  std::vector<std::vector<double>> maes(count);
  std::vector<std::vector<double>> fhe_actions(count), ref_actions(count);
  std::vector<CostLedger> ledgers(count);
  const auto batch = a.inputs.empty() ? synthetic_batch(count, m.input_rows, m.input_cols, g.seed)
                                      : std::vector<Matrix>{};
  parallel_for(count, [&](std::size_t i) {
    const Matrix img = a.inputs.empty() ? batch[i] : input_for(m, a.inputs[i], g.seed, i);
    SlotVm vm(g.vm(i));
    const RunResult r = run_model(vm, m, img, g.run(true));
    const auto ref = oracle::run_model(m, img);
    maes[i] = block_mae(*r.intermediates, ref);
    fhe_actions[i] = r.action;
    ref_actions[i] = ref.action;
    ledgers[i] = r.ledger;
  });

  CostLedger total;
  for (const auto& l : ledgers) total.merge(l);
  std::vector<double> mean(kBlocks.size(), 0.0);
  for (const auto& v : maes) {
    for (std::size_t b = 0; b < mean.size(); ++b) mean[b] += v[b] / static_cast<double>(count);
  }
  std::vector<double> pred, target;
  for (std::size_t i = 0; i < count; ++i) {
    pred.insert(pred.end(), fhe_actions[i].begin(), fhe_actions[i].end());
    target.insert(target.end(), ref_actions[i].begin(), ref_actions[i].end());
  }
  double r2 = std::nan("");
  try {
    r2 = oracle::r2(pred, target);
  } catch (const DegenerateInput&) {
  }

  const std::vector<double> bands = a.linear_only ? std::vector<double>{1e-6, 1e-6, 1e-6}
                                                  : std::vector<double>{0.02, 0.02, 0.03};
  const double r2_band = 0.99;
  std::ostringstream s;
  s << "block,mae,band,reference_teacher,reference_student1,reference_student2\n";
  bool ok = true;
  for (std::size_t b = 0; b < kBlocks.size(); ++b) {
    const auto& ref = reference::kMae[b];
    s << kBlocks[b] << "," << fmt(mean[b]) << "," << fmt(bands[b]) << "," << ref.teacher << ","
      << ref.student1 << "," << ref.student2 << "\n";
    ok = ok && mean[b] <= bands[b];
  }
  s << "action_r2," << fmt(r2) << "," << (a.linear_only ? "" : fmt(r2_band)) << ","
    << reference::kR2Teacher << ",," << reference::kR2Student2 << "\n";
  if (!a.linear_only) ok = ok && r2 >= r2_band;

  std::cout << "model: " << m.name << (a.linear_only ? " (activations disabled)" : "") << " inputs="
            << count << " (" << g.echo() << ")\n";
  std::cout << s.str();
  std::cout << ledger_csv(total, nullptr, nullptr);
  if (!a.csv.empty()) write_text(a.csv, s.str());
  if (a.check) {
    std::cout << (ok ? "check: PASS\n" : "check: FAIL\n");
    return ok ? 0 : kExitCheckFailed;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// sweep-filters
// ---------------------------------------------------------------------------

struct SweepArgs {
  std::vector<std::size_t> filters = {16, 32, 64, 128};
  bool mae = true;
  std::string csv;
};

int cmd_sweep_filters(const Globals& g, const SweepArgs& a) {
  std::ostringstream s;
  s << "filters,ct_mults,ct_mults_per_pair,conv_mae,reference_seconds\n";
  for (std::size_t f : a.filters) {
    if (f == 0) throw ConfigError("filter count must be positive");
    const ModelSpec m = random_model(Architecture::student2_with_filters(f), g.seed, 4);
    const Matrix img = synthetic_batch(1, m.input_rows, m.input_cols, g.seed).front();

    VmConfig dry = g.vm();
    dry.dry_run = true;
    SlotVm counter(dry);
    RunOptions opt;
    opt.strategy = ConvStrategy::spectral;
    const auto spectral = run_model(counter, m, img, opt).ledger.total();
    opt.strategy = ConvStrategy::per_pair;
    const auto per_pair = run_model(counter, m, img, opt).ledger.total();

    std::string mae;
    if (a.mae) {
      SlotVm vm(g.vm());
      const auto r = run_model(vm, m, img, g.run(true));
      mae = fmt(oracle::mae(flatten(r.intermediates->conv), flatten(oracle::run_model(m, img).conv)));
    }
    std::string ref;
    for (const auto& p : reference::kFilterSweep) {
      if (static_cast<std::size_t>(p.filters) == f) ref = fmt(p.seconds, 8);
    }
    s << f << "," << spectral.mults() << "," << per_pair.mults() << "," << mae << "," << ref << "\n";
  }
  std::cout << s.str();
  if (!a.csv.empty()) write_text(a.csv, s.str());
  return 0;
}

// ---------------------------------------------------------------------------
// approx-report
// ---------------------------------------------------------------------------

struct ApproxArgs {
  std::size_t points = 2000;
  std::string csv;
};

int cmd_approx_report(const Globals& g, const ApproxArgs& a) {
  if (a.points < 2) throw ConfigError("need at least two points");
  std::ostringstream s;
  s << "kind,x,value,reference,error\n";
  // Tanh over [-2, 2], relative error; x = 0 is skipped (tanh(0) = 0).
  for (double x : oracle::linspace(-2.0, 2.0, a.points)) {
    if (x == 0.0) continue;
    const double p = kTanhPoly(x);
    s << "tanh," << fmt(x, 8) << "," << fmt(p, 10) << "," << fmt(std::tanh(x), 10) << ","
      << fmt(std::abs(p - std::tanh(x)) / std::abs(std::tanh(x)), 6) << "\n";
  }
  // Limit x -> 0+, where p(x)/x tends to the linear coefficient.
  {
    const double x = 1e-6;
    const double p = kTanhPoly(x);
    s << "tanh," << fmt(x, 8) << "," << fmt(p, 10) << "," << fmt(std::tanh(x), 10) << ","
      << fmt(std::abs(p - std::tanh(x)) / std::abs(std::tanh(x)), 6) << "\n";
  }
  // Sign gate: worst |gate - step| over dyadic bands 2^-k <= |x| <= 2^-(k-1).
  const SignApproxConfig cfg;
  for (int k = 1; k <= 10; ++k) {
    const double hi = std::ldexp(1.0, -(k - 1));
    const double lo = std::ldexp(1.0, -k);
    double worst = 0.0;
    for (double x : oracle::linspace(lo, hi, 1000)) {
      worst = std::max({worst, std::abs(sign_gate(x, cfg) - 1.0), std::abs(sign_gate(-x, cfg))});
    }
    s << "sign_band," << fmt(lo, 8) << "," << fmt(hi, 8) << ",step," << fmt(worst, 6) << "\n";
  }
  s << "sign_depth," << cfg.depth << "," << relu_levels(cfg) << ",levels,\n";
  std::cout << "approximation report (" << g.echo() << ")\n" << s.str();
  if (!a.csv.empty()) write_text(a.csv, s.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "heinfer: encrypted actor-network inference on a simulated CKKS slot VM.\n\n"
      "CSV columns:\n"
      "  infer/compare ledger: block,mults_ct_ct,mults_ct_pt,rotations,adds,bootstraps[,mae][,seconds]\n"
      "  compare: block,mae,band,reference_teacher,reference_student1,reference_student2\n"
      "  sweep-filters: filters,ct_mults,ct_mults_per_pair,conv_mae,reference_seconds\n"
      "  approx-report: kind,x,value,reference,error\n\n"
      "Environment: HEINFER_THREADS caps batch parallelism.\n"
      "Exit codes: 0 ok, 1 check failed, 2 file or format error, 3 depth budget exhausted."};
  app.require_subcommand(1);

  Globals g;
  app.add_option("--vm-n", g.vm_n, "Slot count N (power of two)")->capture_default_str();
  app.add_option("--depth-budget", g.depth_budget, "Multiplicative depth budget")->capture_default_str();
  app.add_option("--noise-sigma", g.noise_sigma, "Relative noise per multiplication (0 = exact)")
      ->capture_default_str();
  app.add_flag("--literal-rotate-sum", g.literal_rotate_sum, "Use N-1 single-step rotations in rotate-sum");
  app.add_option("--seed", g.seed, "Seed for weights, inputs and noise")->capture_default_str();
  app.add_option("--strategy", g.strategy, "Convolution strategy")
      ->check(CLI::IsMember({"spectral", "per-pair"}))
      ->capture_default_str();
  app.add_flag("--timing", g.timing, "Add wall-clock seconds to reports (not byte-stable)");

  MakeWeightsArgs mw;
  auto* make = app.add_subcommand("make-weights", "Write seeded random weights with calibrated scales");
  make->add_option("--arch", mw.arch, "teacher | student1 | student2")
      ->check(CLI::IsMember({"teacher", "student1", "student2"}))
      ->capture_default_str();
  make->add_option("--filters", mw.filters, "Student2 layout with this many filters per block");
  make->add_option("--calibration", mw.calibration, "Calibration images")->capture_default_str();
  make->add_option("--out", mw.out, "Output weight file")->required();

  InferArgs inf;
  auto* infer = app.add_subcommand("infer", "Encrypted inference on one input with a cost report");
  infer->add_option("--weights", inf.weights, "Weight file")->required();
  infer->add_option("--input", inf.input, "Input grid (CSV or whitespace separated)");
  infer->add_flag("--random", inf.random, "Use a seeded synthetic input");
  infer->add_option("--csv", inf.csv, "Write the ledger table to this file");

  CompareArgs cmp;
  auto* compare = app.add_subcommand("compare", "Per-block MAE and action R2 against the plaintext oracle");
  compare->add_option("--weights", cmp.weights, "Weight file")->required();
  compare->add_option("--input", cmp.inputs, "Input grids (repeatable); default: synthetic batch");
  compare->add_option("--batch", cmp.batch, "Synthetic batch size")->capture_default_str();
  compare->add_flag("--check", cmp.check, "Exit 1 unless every band holds");
  compare->add_flag("--linear-only", cmp.linear_only, "Disable all activations");
  compare->add_option("--csv", cmp.csv, "Write the MAE table to this file");

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep-filters", "Cost and accuracy versus filter count");
  sweep->add_option("--filters", sw.filters, "Filter counts")->delimiter(',')->capture_default_str();
  sweep->add_flag("!--no-mae", sw.mae, "Skip the encrypted accuracy run");
  sweep->add_option("--csv", sw.csv, "Write the table to this file");

  ApproxArgs ap;
  auto* approx = app.add_subcommand("approx-report", "Tanh relative-error curve and sign-gate error bands");
  approx->add_option("--points", ap.points, "Tanh sample points on [-2, 2]")->capture_default_str();
  approx->add_option("--csv", ap.csv, "Write the table to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*make) return cmd_make_weights(g, mw);
    if (*infer) return cmd_infer(g, inf);
    if (*compare) return cmd_compare(g, cmp);
    if (*sweep) return cmd_sweep_filters(g, sw);
    if (*approx) return cmd_approx_report(g, ap);
  } catch (const DepthExhausted& e) {
    std::cerr << "error: depth budget exhausted: " << e.what() << "\n";
    return kExitDepth;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
