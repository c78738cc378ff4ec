// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "segalign/segalign.hpp"
#include "test_util.hpp"

using namespace segalign;
namespace fs = std::filesystem;
using segalign::testing::random_matrix;
using segalign::testing::random_vector;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += "FAILED " + what;
    }
  }
  void note(const std::string& s) {
    if (!detail.empty()) detail += "; ";
    detail += s;
  }
};

std::string num(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------

Verdict dp_vs_oracle() {
  Verdict v;
  Rng rng(101);
  int kernel_ok = 0, cluster_ok = 0;
  const int trials = 120;
  for (int t = 0; t < trials; ++t) {
    const int n = rng.uniform_int(1, 12);
    const int a = rng.uniform_int(1, std::min(4, n));
    LatentSequence x{random_matrix(n, rng.uniform_int(1, 3), rng)};
    if (t % 3 == 0) x.vectors = x.vectors.array().round();  // exact ties
    const auto dp = kernel_cpd_solve(x, a);
    const auto bf = brute_force_kernel_segment(x, a);
    kernel_ok += dp.objective == bf.objective && dp.boundaries == bf.boundaries;
  }
  for (int t = 0; t < trials; ++t) {
    PrimitiveLibrary lib;
    lib.window = rng.uniform_int(1, 3);
    lib.stride = 1;
    const int d = rng.uniform_int(1, 2);
    const int nw = rng.uniform_int(1, 12);
    const int n = nw + lib.window - 1;
    const int a = rng.uniform_int(1, std::min(4, nw));
    lib.centers = random_matrix(rng.uniform_int(1, 4), lib.window * d, rng);
    LatentSequence x{random_matrix(n, d, rng)};
    if (t % 3 == 0) {
      x.vectors = x.vectors.array().round();
      lib.centers = lib.centers.array().round();
    }
    const auto dp = cluster_dp_solve(x, lib, a);
    const auto bf = brute_force_cluster_windows(window_cost_matrix(x, lib), a);
    const auto bf_tokens = windows_to_tokens(bf.boundaries, n, lib.window, lib.stride);
    cluster_ok += dp.objective == bf.objective && dp.boundaries == bf_tokens && dp.primitives == bf.primitives;
  }
  v.note("kernel " + std::to_string(kernel_ok) + "/" + std::to_string(trials) + ", cluster " +
         std::to_string(cluster_ok) + "/" + std::to_string(trials));
  v.check(kernel_ok == trials && cluster_ok == trials, "exact agreement");
  return v;
}

// ---------------------------------------------------------------------------

Verdict segmentation_ordering() {
  Verdict v;
  int ok = 0;
  const int seeds = 5;
  std::string rows;
  for (int seed = 1; seed <= seeds; ++seed) {
    CorpusSpec spec;
    spec.seed = static_cast<std::uint64_t>(seed);
    spec.sequences = 500;
    spec.dim = 4;
    spec.jitter_frames = 12;
    spec.noise_std = 2.8;
    const auto corpus = generate_corpus(spec);
    std::vector<LatentSequence> lat;
    for (const auto& s : corpus.sequences) lat.push_back(project_latent(s.motion, spec.ratio));
    const auto lib = build_primitive_library(lat, kDefaultWindow, kDefaultWindowStride, kDefaultPrimitives,
                                             derive_seed(spec.seed, "acceptance/library"));
    std::vector<SegmentBoundaries> uni, cpd, clu, truth;
    for (std::size_t i = 0; i < lat.size(); ++i) {
      const auto& t = corpus.sequences[i].token_truth;
      truth.push_back(t);
      uni.push_back(uniform_segment(lat[i].length(), t.count()));
      cpd.push_back(kernel_cpd_segment(lat[i], t.count()));
      clu.push_back(cluster_dp_segment(lat[i], lib, t.count()));
    }
    const auto eu = seg_error_eval(uni, truth), ek = seg_error_eval(cpd, truth), ec = seg_error_eval(clu, truth);
    const bool good = ek.mean < eu.mean && eu.std <= ek.std && eu.std <= ec.std;
    ok += good;
    rows += " seed" + std::to_string(seed) + "[uni " + num(eu.mean, 3) + "/" + num(eu.std, 3) + " cpd " +
            num(ek.mean, 3) + "/" + num(ek.std, 3) + " clu " + num(ec.mean, 3) + "/" + num(ec.std, 3) + "]";
  }
  v.note(std::to_string(ok) + "/" + std::to_string(seeds) + " seeds hold (mean/std):" + rows);
  v.check(ok == seeds, "ordering on every seed");
  return v;
}

// ---------------------------------------------------------------------------

Vector vec2(double a, double b) {
  Vector out(2);
  out << a, b;
  return out;
}

Verdict loss_closed_forms() {
  Verdict v;
  AlignmentConfig cfg;
  SegmentEmbeddings ortho;
  ortho.text = {{vec2(1, 0), vec2(0, 1)}};
  ortho.motion = ortho.text;
  const double l = loss_per_sample(ortho, cfg);
  v.check(std::abs(l - std::log1p(std::exp(-10.0))) <= 1e-9, "orthogonal 2x2 = log(1+e^-10), got " + num(l, 17));

  Rng rng(7);
  SegmentEmbeddings singles;
  for (int i = 0; i < 5; ++i) {
    singles.text.push_back({random_vector(4, rng)});
    singles.motion.push_back({random_vector(4, rng)});
  }
  v.check(loss_per_sample(singles, cfg) == 0.0, "A_i = 1 gives exactly 0");

  for (int a = 2; a <= 5; ++a) {
    SegmentEmbeddings eq;
    eq.text = {std::vector<Vector>(static_cast<std::size_t>(a), vec2(1, 1))};
    eq.motion = {std::vector<Vector>(static_cast<std::size_t>(a), vec2(3, 3))};
    const double le = loss_per_sample(eq, cfg);
    v.check(std::abs(le - std::log(static_cast<double>(a))) <= 1e-12, "all-equal sims give log A for A=" + std::to_string(a));
  }
  v.check(loss_global({vec2(1, 2)}, {vec2(-3, 1)}, cfg) == 0.0, "global loss with B=1 gives 0");
  if (v.pass) v.note("all closed forms hold");
  return v;
}

// ---------------------------------------------------------------------------

AlignSample random_sample(Rng& rng, int token_dim, int embed_dim, int segments, int tokens_per_segment) {
  AlignSample s;
  const int n = segments * tokens_per_segment;
  s.tokens = random_matrix(n, token_dim, rng);
  s.spans = uniform_segment(n, segments);
  for (int j = 0; j < segments; ++j) s.text_segments.push_back(random_vector(embed_dim, rng));
  s.text_global = normalized_mean(s.text_segments);
  return s;
}

Verdict gradient_audit() {
  Verdict v;
  Rng rng(404);
  AlignmentConfig cfg;
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    std::vector<AlignSample> samples;
    const int batch = rng.uniform_int(1, 3);
    for (int i = 0; i < batch; ++i)
      samples.push_back(random_sample(rng, 3, 6, rng.uniform_int(2, 4), rng.uniform_int(1, 3)));
    std::vector<const AlignSample*> ptrs;
    for (const auto& s : samples) ptrs.push_back(&s);
    const auto params = AggregatorParams::init(3, 6, 1000 + static_cast<std::uint64_t>(inst));
    const auto obj = alignment_objective(ptrs, params, cfg, AlignLossKind::PerSample);
    auto f = [&](const std::vector<double>& x) {
      auto p = params;
      p.unflatten(x);
      return alignment_objective(ptrs, p, cfg, AlignLossKind::PerSample, false).loss;
    };
    const auto numeric = segalign::testing::central_differences(f, params.flatten(), 1e-5);
    worst = std::max(worst, segalign::testing::max_relative_error(obj.grads.flatten(), numeric));
  }
  v.note("max relative error " + num(worst, 3) + " over 50 instances");
  v.check(worst < 1e-4, "gradient agreement < 1e-4");
  return v;
}

// ---------------------------------------------------------------------------

SegmentEmbeddings random_embeddings(Rng& rng, int batch, int max_segments, int dim) {
  SegmentEmbeddings e;
  for (int i = 0; i < batch; ++i) {
    const int a = rng.uniform_int(2, max_segments);
    e.text.emplace_back();
    e.motion.emplace_back();
    for (int j = 0; j < a; ++j) {
      e.text.back().push_back(random_vector(dim, rng));
      e.motion.back().push_back(random_vector(dim, rng));
    }
  }
  return e;
}

Verdict invariances() {
  Verdict v;
  Rng rng(505);
  AlignmentConfig cfg;
  double scale_dev = 0.0, swap_dev = 0.0, perm_dev = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto e = random_embeddings(rng, 3, 4, 6);
    std::vector<Vector> gt, gm;
    for (int i = 0; i < e.batch(); ++i) {
      gt.push_back(normalized_mean(e.text[i]));
      gm.push_back(e.motion[i][0]);
    }
    const double ps = loss_per_sample(e, cfg), bt = loss_batch(e, cfg), gl = loss_global(gt, gm, cfg);

    auto scaled = e;
    const auto i = static_cast<std::size_t>(rng.below(scaled.motion.size()));
    const auto j = static_cast<std::size_t>(rng.below(scaled.motion[i].size()));
    scaled.motion[i][j] *= rng.uniform(0.01, 100.0);
    scaled.text[0][0] *= rng.uniform(0.01, 100.0);
    auto gm_scaled = gm;
    gm_scaled[0] *= rng.uniform(0.01, 100.0);
    scale_dev = std::max({scale_dev, std::abs(loss_per_sample(scaled, cfg) - ps), std::abs(loss_batch(scaled, cfg) - bt),
                          std::abs(loss_global(gt, gm_scaled, cfg) - gl)});

    swap_dev = std::max({swap_dev, std::abs(loss_per_sample(e.swapped(), cfg) - ps),
                         std::abs(loss_batch(e.swapped(), cfg) - bt), std::abs(loss_global(gm, gt, cfg) - gl)});

    auto perm = e;
    for (int s = 0; s < perm.batch(); ++s) {
      std::vector<int> order(perm.text[s].size());
      for (std::size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);
      rng.shuffle(order);
      std::vector<Vector> t, m;
      for (int k : order) {
        t.push_back(e.text[s][k]);
        m.push_back(e.motion[s][k]);
      }
      perm.text[s] = t;
      perm.motion[s] = m;
    }
    perm_dev = std::max(perm_dev, std::abs(loss_per_sample(perm, cfg) - ps));
  }
  v.note("scale " + num(scale_dev, 3) + ", swap " + num(swap_dev, 3) + ", permutation " + num(perm_dev, 3));
  v.check(scale_dev <= 1e-9, "rescaling <= 1e-9");
  v.check(swap_dev < 1e-12, "modality swap < 1e-12");
  v.check(perm_dev < 1e-12, "segment permutation < 1e-12");
  return v;
}

// ---------------------------------------------------------------------------

Verdict toy_alignment() {
  Verdict v;
  ToyAlignmentSpec spec;
  spec.seed = 2024;
  const auto data = make_toy_alignment_data(spec);
  const auto init = AggregatorParams::init(spec.token_dim, spec.embed_dim, derive_seed(spec.seed, "acceptance/init"));
  const double before = intra_sample_retrieval_top1(data.heldout, init);
  AlignmentConfig cfg;
  ToyTrainOptions opt;
  opt.steps = 500;
  opt.seed = spec.seed;
  const auto res = toy_train(data.train, cfg, opt, init);
  const double after = intra_sample_retrieval_top1(data.heldout, res.params);
  v.note("untrained " + num(before) + ", after 500 steps " + num(after) + " (" + std::to_string(data.train.size()) +
         " train / " + std::to_string(data.heldout.size()) + " held-out)");
  v.check(before >= 0.25 && before <= 0.60, "untrained baseline in [0.25, 0.60]");
  v.check(after >= 0.95, "held-out top-1 >= 0.95");
  return v;
}

// ---------------------------------------------------------------------------

// Each interior cut moves by a nonzero offset in [-2, 2] that keeps spans nonempty.
SegmentBoundaries perturb(const SegmentBoundaries& b, int n, Rng& rng) {
  auto cuts = b.cuts();
  for (std::size_t k = 0; k < cuts.size(); ++k) {
    const int lo = k == 0 ? 1 : cuts[k - 1] + 1;
    const int hi = k + 1 < cuts.size() ? cuts[k + 1] - 1 : n - 1;
    std::vector<int> options;
    for (int d = -2; d <= 2; ++d)
      if (d != 0 && cuts[k] + d >= lo && cuts[k] + d <= hi) options.push_back(cuts[k] + d);
    if (!options.empty()) cuts[k] = options[rng.below(options.size())];
  }
  return SegmentBoundaries::from_cuts(cuts, n);
}

Verdict isc_trend() {
  Verdict v;
  std::vector<double> matched, degraded;
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ToyAlignmentSpec spec;
    spec.seed = 300 + seed;
    const auto data = make_toy_alignment_data(spec);
    AlignmentConfig cfg;
    ToyTrainOptions opt;
    opt.seed = spec.seed;
    const auto model = toy_train(data.train, cfg, opt).params;
    Rng rng(derive_seed(spec.seed, "acceptance/perturb"));
    std::vector<std::pair<Vector, Vector>> good, bad;
    for (const auto& s : data.heldout) {
      const auto m = motion_segments(s, model);
      const auto p = perturb(s.spans, static_cast<int>(s.tokens.rows()), rng);
      const auto mp = motion_segments(s, model, &p);
      for (std::size_t j = 0; j < m.size(); ++j) {
        good.emplace_back(s.text_segments[j], m[j]);
        bad.emplace_back(s.text_segments[j], mp[j]);
      }
    }
    matched.push_back(isc_score(good));
    degraded.push_back(isc_score(bad));
    wins += matched.back() > degraded.back();
  }
  const double cv_m = isc_cv(matched), cv_d = isc_cv(degraded);
  double mean_m = 0, mean_d = 0;
  for (int i = 0; i < 10; ++i) {
    mean_m += matched[i] / 10;
    mean_d += degraded[i] / 10;
  }
  v.note("matched > perturbed in " + std::to_string(wins) + "/10 seeds; mean ISC " + num(mean_m) + " vs " + num(mean_d) +
         "; CV " + num(cv_m, 3) + " vs " + num(cv_d, 3));
  v.check(wins >= 9, ">= 9 of 10 seeds");
  v.check(cv_d > cv_m, "degraded CV exceeds matched CV");
  return v;
}

// ---------------------------------------------------------------------------

std::vector<LatentSequence> gaussian_mixture(Rng& rng, int sequences, int length, int dim, int clusters) {
  std::vector<Vector> centers;
  for (int c = 0; c < clusters; ++c) centers.push_back(random_vector(dim, rng, 3.0));
  std::vector<LatentSequence> data;
  for (int s = 0; s < sequences; ++s) {
    LatentSequence x;
    x.vectors.resize(length, dim);
    for (int i = 0; i < length; ++i)
      x.vectors.row(i) = (centers[rng.below(clusters)] + random_vector(dim, rng, 0.5)).transpose();
    data.push_back(x);
  }
  return data;
}

Verdict rvq() {
  Verdict v;
  int monotone = 0;
  bool consistent = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(700 + seed);
    const auto data = gaussian_mixture(rng, 4, 40, 3, 6);
    const auto stack = train_codebooks(data, 5, 8, seed, 15);
    bool ok = true;
    double prev = reconstruction_error(data, stack.truncated(1));
    for (int k = 2; k <= 5; ++k) {
      const double e = reconstruction_error(data, stack.truncated(k));
      ok = ok && e <= prev;
      prev = e;
    }
    monotone += ok;
    for (const auto& x : data) {
      const auto q = quantize(x, stack);
      const auto back = dequantize(q.tokens, stack);
      consistent = consistent && back.vectors == q.quantized.vectors;
    }
  }
  Rng rng(9);
  LatentSequence distinct{random_matrix(16, 3, rng)};
  const auto memorizing = train_codebooks({distinct}, 1, 16, 3, 10);
  const double mem = reconstruction_error({distinct}, memorizing);
  const auto q = quantize(distinct, memorizing);
  v.check(quantize(dequantize(q.tokens, memorizing), memorizing).tokens.layers == q.tokens.layers,
          "idempotent on the memorizing stack");
  v.note("non-increasing on " + std::to_string(monotone) + "/20 datasets; memorizing error " + num(mem, 3));
  v.check(monotone == 20, "error non-increasing in layers");
  v.check(mem < 1e-12, "memorizing stack < 1e-12");
  v.check(consistent, "dequantize(quantize(v)) equals the quantized output");
  return v;
}

// ---------------------------------------------------------------------------

class OraclePredictor : public TokenPredictor {
 public:
  OraclePredictor(std::vector<int> target, int vocab) : target_(std::move(target)), vocab_(vocab) {}
  int vocabulary() const override { return vocab_; }
  std::vector<Vector> predict(const Matrix&, const MaskState& state) const override {
    std::vector<Vector> out;
    for (int p : state.masked) {
      const double conf = 0.4 + 0.5 * std::abs(std::cos(0.9 * p + 1.1));
      Vector d = Vector::Constant(vocab_, (1.0 - conf) / (vocab_ - 1));
      d[target_[p]] = conf;
      out.push_back(d);
    }
    return out;
  }

 private:
  std::vector<int> target_;
  int vocab_;
};

Verdict masked_decoding() {
  Verdict v;
  std::vector<int> sched;
  for (int t = 0; t <= 5; ++t) sched.push_back(cosine_mask_count(t, 5, 10));
  v.check(sched == std::vector<int>({10, 9, 8, 5, 3, 0}), "cosine_mask_count(L=10, T=5) = [10,9,8,5,3,0]");
  Rng rng(99);
  int exact = 0, clean = 0, cases = 0;
  for (int length = 1; length <= 64; ++length)
    for (int iters = 1; iters <= 10; ++iters) {
      ++cases;
      std::vector<int> target(static_cast<std::size_t>(length));
      for (int& t : target) t = static_cast<int>(rng.below(8));
      OraclePredictor p(target, 8);
      const auto r = iterative_decode(Matrix::Zero(1, 1), length, p, {iters, false, 0});
      exact += r.tokens == target;
      std::set<int> committed;
      bool ok = true;
      for (const auto& step : r.trace)
        for (int pos : step.fixed) ok = ok && committed.insert(pos).second;
      clean += ok && static_cast<int>(committed.size()) == length;
    }
  v.note("schedule ok; oracle exact " + std::to_string(exact) + "/" + std::to_string(cases) + ", trace clean " +
         std::to_string(clean) + "/" + std::to_string(cases));
  v.check(exact == cases, "oracle reproduces every target");
  v.check(clean == cases, "no committed token re-masked");
  return v;
}

// ---------------------------------------------------------------------------

Verdict metrics() {
  Verdict v;
  Rng rng(1234);
  const Matrix x = random_matrix(300, 6, rng);
  const double same = fid(x, x);
  v.check(same < 1e-6, "fid(identical) < 1e-6, got " + num(same, 3));

  GaussianStats base{Vector::Zero(2), Matrix::Identity(2, 2)};
  GaussianStats shifted{vec2(2, 0), Matrix::Identity(2, 2)};
  GaussianStats wide{Vector::Zero(2), 4.0 * Matrix::Identity(2, 2)};
  v.check(std::abs(fid_from_stats(base, shifted) - 4.0) <= 1e-6, "mean-shift FID = 4");
  v.check(std::abs(fid_from_stats(base, wide) - 2.0) <= 1e-6, "variance FID = 2");

  double total = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng r(5000 + s);
    total += diversity(random_matrix(1000, 2, r), kDiversityPairs, s);
  }
  const double div = total / 20.0;
  v.check(std::abs(div - std::sqrt(std::numbers::pi)) <= 0.05, "diversity within 0.05 of sqrt(pi)");

  int monotone = 0;
  for (int pool = 0; pool < 100; ++pool) {
    const Matrix t = random_matrix(32, 4, rng);
    const Matrix m = t + random_matrix(32, 4, rng, 1.5);
    bool ok = true;
    double prev = 0.0;
    for (int k = 1; k <= 10; ++k) {
      const double r = r_precision(t, m, k).value;
      ok = ok && r >= prev;
      prev = r;
    }
    monotone += ok;
  }
  v.check(monotone == 100, "r_precision monotone in k");
  v.note("fid(identical) " + num(same, 3) + ", diversity " + num(div) + " (sqrt(pi) = " + num(std::sqrt(std::numbers::pi)) +
         "), r_precision monotone on " + std::to_string(monotone) + "/100 pools");
  return v;
}

// ---------------------------------------------------------------------------

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

int run_cli(const std::string& args) {
  const std::string cmd = shell_quote(SEGALIGN_CLI_PATH) + " --quiet " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// Runs the whole pipeline into `root`; returns the names of failed steps.
std::vector<std::string> run_pipeline(const fs::path& root) {
  const std::string r = shell_quote(root.string());
  const std::vector<std::pair<std::string, std::string>> steps{
      {"synth", "--seed 11 --out " + r + "/data synth --sequences 24 --jitter-frames 6 --noise-std 0.5"},
      {"decompose", "--out " + r + "/dec decompose --data " + r + "/data --fallback"},
      {"quantize", "--seed 3 --out " + r + "/q quantize --data " + r + "/data --layers 3 --codes 16 --iters 10"},
      {"segment-cpd", "--out " + r + "/cpd segment --data " + r + "/data --method cpd"},
      {"segment-cluster", "--seed 5 --out " + r + "/clu segment --data " + r + "/data --method cluster --library " + r +
                              "/lib.json --build-library --primitives 8"},
      {"train-toy", "--seed 2 --out " + r + "/toy train-align --steps 40"},
      {"train-data", "--seed 2 --out " + r + "/train train-align --data " + r + "/data --codebooks " + r +
                         "/q/codebooks.json --steps 40"},
      {"decode", "--seed 4 --out " + r + "/dec2 decode --data " + r + "/data --codebooks " + r +
                     "/q/codebooks.json --predictor " + r + "/train/predictor.json --iters 6"},
      {"ground", "--out " + r + "/g ground --data " + r + "/data --model " + r + "/train/params.json"},
      {"retrieve", "--out " + r + "/ret retrieve --data " + r + "/data --model " + r + "/train/params.json"},
      {"eval", "--seed 6 --out " + r + "/ev eval --metric isc --data " + r + "/data --model " + r + "/train/params.json"},
  };
  std::vector<std::string> failed;
  for (const auto& [name, args] : steps)
    if (run_cli(args) != 0) failed.push_back(name);
  return failed;
}

std::string read_or_empty(const fs::path& p) {
  try {
    return io::read_file(p);
  } catch (const Error&) {
    return {};
  }
}

Verdict formats() {
  Verdict v;
  Rng rng(31);
  int motion_ok = 0, dataset_ok = 0;
  for (int t = 0; t < 20; ++t) {
    MotionSequence m;
    m.frames = random_matrix(rng.uniform_int(1, 40), rng.uniform_int(1, 6), rng, 10.0);
    const std::string bytes = encode_motion(m);
    motion_ok += encode_motion(decode_motion(bytes)) == bytes;
  }
  CorpusSpec spec;
  spec.sequences = 20;
  spec.noise_std = 0.3;
  spec.seed = 8;
  const auto corpus = generate_corpus(spec);
  std::vector<DatasetRecord> records;
  for (const auto& s : corpus.sequences) records.push_back(s.record);
  const std::string text = encode_dataset(records);
  dataset_ok = encode_dataset(decode_dataset(text)) == text;
  v.check(motion_ok == 20, "motion binary round-trip");
  v.check(dataset_ok, "dataset JSON-lines round-trip");

  segalign::testing::TempDir a("segalign-accept-a"), b("segalign-accept-b");
  const auto fa = run_pipeline(a.path()), fb = run_pipeline(b.path());
  std::string failed;
  for (const auto& f : fa) failed += " " + f;
  v.check(fa.empty() && fb.empty(), "CLI steps exited nonzero:" + failed);

  int compared = 0, identical = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a.path());
    if (rel.filename() == "manifest.json") continue;  // records the output paths
    ++compared;
    const std::string x = read_or_empty(entry.path()), y = read_or_empty(b.path() / rel);
    identical += !x.empty() && x == y;
    if (x != y) v.check(false, "bit-identical " + rel.string());
  }
  for (const auto& entry : fs::recursive_directory_iterator(a.path())) {
    if (entry.path().filename() != "manifest.json") continue;
    const auto rel = fs::relative(entry.path(), a.path());
    const auto ja = nlohmann::json::parse(read_or_empty(entry.path()));
    const auto jb = nlohmann::json::parse(read_or_empty(b.path() / rel), nullptr, false);
    ++compared;
    const bool same = !jb.is_discarded() && ja["content_hash"] == jb["content_hash"] && ja["files"] == jb["files"];
    identical += same;
    if (!same) v.check(false, "manifest hash " + rel.string());
  }
  v.note("motion 20/20, dataset ok; " + std::to_string(identical) + "/" + std::to_string(compared) +
         " CLI outputs identical across two runs");
  v.check(compared > 20, "pipeline produced outputs");
  return v;
}

// ---------------------------------------------------------------------------

struct Criterion {
  int id;
  const char* name;
  double limit_s;  // 0 = no runtime bound
  std::function<Verdict()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "DP segmenters match brute force", 10.0, dp_vs_oracle},
      {2, "segmentation error ordering", 60.0, segmentation_ordering},
      {3, "alignment loss closed forms", 0.0, loss_closed_forms},
      {4, "gradient audit", 30.0, gradient_audit},
      {5, "loss invariances", 0.0, invariances},
      {6, "toy alignment end to end", 120.0, toy_alignment},
      {7, "ISC under matched vs perturbed boundaries", 0.0, isc_trend},
      {8, "residual quantization", 0.0, rvq},
      {9, "masked iterative decoding", 0.0, masked_decoding},
      {10, "evaluation metrics", 0.0, metrics},
      {11, "formats and CLI reproducibility", 0.0, formats},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_s > 0.0) v.check(secs < c.limit_s, "runtime < " + num(c.limit_s) + " s");
    failures += !v.pass;
    std::printf("%s [%2d] %s: %s (%.2f s)\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
