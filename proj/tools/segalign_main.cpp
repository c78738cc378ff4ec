// SPDX-License-Identifier: Apache-2.0
//
// segalign: command-line pipelines over the segalign library.
//
// Exit codes: 0 success; 2 a library error aborted the command; 3 the command
// finished but some records were rejected; 1 unexpected failure. CLI11 usage
// errors keep CLI11's own codes. A one-line JSON summary goes to stdout on
// success and to stderr on error.

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cli_support.hpp"
#include "segalign/llm_client.hpp"
#include "segalign/segalign.hpp"

namespace segalign::cli {
namespace {

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string config;
  std::string out = ".";
  bool quiet = false;
};

// Records that failed validation; a non-empty list makes the exit code 3.
struct Rejections {
  nlohmann::ordered_json list = nlohmann::ordered_json::array();

  void add(const std::string& id, const Error& e) {
    list.push_back({{"id", id}, {"code", to_string(e.code())}, {"message", e.what()}});
  }
  bool empty() const { return list.empty(); }
};

struct Outcome {
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
  Rejections rejected;
};

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  std::string spec;
  std::optional<int> sequences, min_segments, max_segments, tokens_per_segment, jitter_frames;
  std::optional<double> noise_std;
};

Outcome cmd_synth(RunContext& ctx, const SynthOptions& o, bool seed_given) {
  CorpusSpec spec;
  if (!o.spec.empty()) {
    try {
      spec = corpus_spec_from_json(nlohmann::json::parse(io::read_file(o.spec)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Validation, "spec '" + o.spec + "': " + e.what());
    }
  }
  if (seed_given) spec.seed = ctx.seed();
  if (o.sequences) spec.sequences = *o.sequences;
  if (o.min_segments) spec.min_segments = *o.min_segments;
  if (o.max_segments) spec.max_segments = *o.max_segments;
  if (o.tokens_per_segment) spec.tokens_per_segment = *o.tokens_per_segment;
  if (o.jitter_frames) spec.jitter_frames = *o.jitter_frames;
  if (o.noise_std) spec.noise_std = *o.noise_std;
  spec.validate();

  const auto corpus = generate_corpus(spec);
  std::vector<DatasetRecord> records;
  BoundaryMap truth;
  for (const auto& s : corpus.sequences) {
    ctx.write(s.record.motion_path, encode_motion(s.motion));
    records.push_back(s.record);
    truth[s.record.id] = s.token_truth;
  }
  ctx.write("dataset.jsonl", encode_dataset(records));
  ctx.write("truth.json", encode_boundaries(records, truth));
  ctx.write("corpus_spec.json", to_json(spec).dump(2) + "\n");
  ctx.log("wrote " + std::to_string(records.size()) + " sequences");

  Outcome out;
  out.summary["sequences"] = records.size();
  out.summary["spec_seed"] = spec.seed;
  return out;
}

// ---------------------------------------------------------------------------
// decompose

struct DecomposeOptions {
  std::string data;
  bool fallback = false;
  std::string endpoint;
  std::string model = LlmEndpointConfig{}.model_name;
  std::string cache;
  int max_segments = kMaxSegments;
  int timeout_ms = 30000;
  int retries = 2;
};

Outcome cmd_decompose(RunContext& ctx, const DecomposeOptions& o) {
  const auto ds = DatasetDir::open(o.data);
  std::optional<LlmDecomposer> llm;
  if (!o.fallback) {
    LlmEndpointConfig cfg;
    if (!o.endpoint.empty()) cfg.base_url = o.endpoint;
    cfg = apply_env_overrides(cfg);
    if (!o.endpoint.empty()) cfg.base_url = o.endpoint;  // an explicit flag beats the environment
    cfg.model_name = o.model;
    cfg.timeout = std::chrono::milliseconds(o.timeout_ms);
    cfg.max_retries = o.retries;
    cfg.cache_path = o.cache.empty() ? (ctx.out() / "llm_cache.jsonl") : fs::path(o.cache);
    llm.emplace(cfg);
  }

  Outcome out;
  std::vector<DatasetRecord> records;
  int changed = 0;
  for (auto r : ds.records) {
    try {
      const auto set = o.fallback ? fallback_decompose(r.raw_text, o.max_segments) : llm->decompose(r.raw_text, o.max_segments);
      if (set.segments != r.text_segments) {
        r.text_segments = set.segments;
        r.embeddings.reset();  // embeddings described the old segments
        ++changed;
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Transport) throw;
      out.rejected.add(r.id, e);
    }
    const fs::path motion = ds.motion_file(r);
    r.motion_path = fs::relative(fs::absolute(motion), fs::absolute(ctx.out())).generic_string();
    records.push_back(std::move(r));
  }
  ctx.write("dataset.jsonl", encode_dataset(records));

  nlohmann::ordered_json report;
  report["source"] = o.fallback ? "fallback" : "llm";
  report["records"] = records.size();
  report["changed"] = changed;
  report["requests_issued"] = llm ? llm->requests_issued() : 0;
  report["rejected"] = out.rejected.list;
  ctx.write("decompose_report.json", report.dump(2) + "\n");
  out.summary["records"] = records.size();
  out.summary["changed"] = changed;
  out.summary["requests_issued"] = report["requests_issued"];
  return out;
}

// ---------------------------------------------------------------------------
// quantize

struct QuantizeOptions {
  std::string data;
  int layers = kDefaultResidualLayers;
  int codes = kDefaultCodesPerLayer;
  int ratio = kDefaultDownsampleRatio;
  int iters = 25;
};

Outcome cmd_quantize(RunContext& ctx, const QuantizeOptions& o) {
  const auto ds = DatasetDir::open(o.data);
  std::vector<LatentSequence> latents;
  for (const auto& r : ds.records) latents.push_back(ds.latents(r, o.ratio));
  const auto stack = train_codebooks(latents, o.layers, o.codes, ctx.stream("cli/quantize"), o.iters);
  ctx.write("codebooks.json", to_json(stack).dump() + "\n");

  std::string tokens;
  for (std::size_t i = 0; i < latents.size(); ++i) {
    nlohmann::ordered_json j;
    j["id"] = ds.records[i].id;
    j["layers"] = quantize(latents[i], stack).tokens.layers;
    tokens += j.dump() + "\n";
  }
  ctx.write("tokens.jsonl", tokens);

  std::string csv = "layers,reconstruction_error\n";
  for (int k = 1; k <= stack.layers(); ++k)
    csv += std::to_string(k) + "," + fmt(reconstruction_error(latents, stack.truncated(k))) + "\n";
  ctx.write("quantize_report.csv", csv);

  Outcome out;
  out.summary["sequences"] = latents.size();
  out.summary["reconstruction_error"] = reconstruction_error(latents, stack);
  return out;
}

// ---------------------------------------------------------------------------
// segment

struct SegmentOptions {
  std::string data;
  std::string method = "uniform";
  std::string library;
  bool build_library = false;
  std::string truth;
  int ratio = kDefaultDownsampleRatio;
  int window = kDefaultWindow;
  int stride = kDefaultWindowStride;
  int primitives = kDefaultPrimitives;
  int iters = 25;
  std::optional<double> bandwidth;
};

Outcome cmd_segment(RunContext& ctx, const SegmentOptions& o) {
  require(o.method == "uniform" || o.method == "cpd" || o.method == "cluster", ErrorCode::Validation,
          "unknown segmentation method '" + o.method + "' (expected uniform, cpd or cluster)");
  const auto ds = DatasetDir::open(o.data);
  std::vector<LatentSequence> latents;
  for (const auto& r : ds.records) latents.push_back(ds.latents(r, o.ratio));

  PrimitiveLibrary lib;
  if (o.method == "cluster") {
    require(!o.library.empty(), ErrorCode::Precondition, "--method cluster needs --library");
    if (o.build_library) {
      lib = build_primitive_library(latents, o.window, o.stride, o.primitives, ctx.stream("cli/library"), o.iters);
      io::write_file_atomic(o.library, to_json(lib).dump() + "\n");
      ctx.log("built primitive library with " + std::to_string(lib.size()) + " primitives");
    } else {
      lib = primitive_library_from_json(nlohmann::json::parse(io::read_file(o.library)));
    }
  }

  Outcome out;
  BoundaryMap pred;
  for (std::size_t i = 0; i < latents.size(); ++i) {
    const auto& r = ds.records[i];
    const int a = static_cast<int>(r.text_segments.size());
    try {
      if (o.method == "uniform") pred[r.id] = uniform_segment(latents[i].length(), a);
      else if (o.method == "cpd") pred[r.id] = kernel_cpd_segment(latents[i], a, o.bandwidth);
      else pred[r.id] = cluster_dp_segment(latents[i], lib, a);
    } catch (const Error& e) {
      out.rejected.add(r.id, e);
    }
  }
  ctx.write("boundaries.json", encode_boundaries(ds.records, pred));

  const fs::path truth_path = o.truth.empty() ? ds.root / "truth.json" : fs::path(o.truth);
  if (fs::exists(truth_path)) {
    const auto truth = load_boundaries(truth_path);
    std::vector<SegmentBoundaries> p, t;
    for (const auto& r : ds.records) {
      auto it = pred.find(r.id);
      if (it == pred.end()) continue;
      p.push_back(it->second);
      t.push_back(find_boundaries(truth, r.id));
    }
    const auto err = seg_error_eval(p, t);
    ctx.write("segment_report.csv", "method,mean_error,std_error\n" + o.method + "," + fmt(err.mean) + "," + fmt(err.std) + "\n");
    out.summary["mean_error"] = err.mean;
    out.summary["std_error"] = err.std;
  } else {
    ctx.log("no ground truth at " + truth_path.string() + "; skipping the error report");
  }
  out.summary["method"] = o.method;
  out.summary["segmented"] = pred.size();
  return out;
}

// ---------------------------------------------------------------------------
// train-align

struct TrainOptions {
  std::string data;
  std::string loss = "sample";
  double lambda = 1.0;
  double tau = kDefaultTemperature;
  int steps = 500;
  double lr = 0.05;
  double momentum = 0.9;
  int batch = 16;
  std::string boundaries;
  double heldout = 0.2;
  std::string codebooks;
  double mask_lr = 0.05;
  int ratio = kDefaultDownsampleRatio;
};

struct AlignCorpus {
  std::vector<AlignSample> train, heldout;
  std::vector<std::vector<int>> train_base, heldout_base;  // base-layer tokens when codebooks are given
};

AlignCorpus load_align_corpus(RunContext& ctx, const TrainOptions& o, std::optional<CodebookStack>& stack) {
  AlignCorpus c;
  if (o.data.empty()) {
    require(o.codebooks.empty(), ErrorCode::Precondition, "--codebooks needs --data");
    ToyAlignmentSpec spec;
    spec.seed = ctx.stream("cli/toy");
    auto toy = make_toy_alignment_data(spec);
    c.train = std::move(toy.train);
    c.heldout = std::move(toy.heldout);
    return c;
  }
  const auto ds = DatasetDir::open(o.data);
  const auto spans = ds.truth_or(o.boundaries);
  if (!o.codebooks.empty()) stack = codebook_stack_from_json(nlohmann::json::parse(io::read_file(o.codebooks)));
  require(o.heldout >= 0.0 && o.heldout < 1.0, ErrorCode::Validation, "--heldout must be in [0, 1)");
  const std::size_t n_held = static_cast<std::size_t>(std::floor(o.heldout * static_cast<double>(ds.records.size())));
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    AlignSample s;
    const auto lat = ds.latents(r, o.ratio);
    s.tokens = lat.vectors;
    s.spans = find_boundaries(spans, r.id);
    s.spans.validate(lat.length());
    s.text_segments = record_embeddings(r);
    s.text_global = normalized_mean(s.text_segments);
    const bool held = i >= ds.records.size() - n_held;
    (held ? c.heldout : c.train).push_back(std::move(s));
    if (stack) (held ? c.heldout_base : c.train_base).push_back(quantize(lat, *stack).tokens.layers[0]);
  }
  require(!c.train.empty(), ErrorCode::InsufficientData, "no training records");
  return c;
}

Outcome cmd_train_align(RunContext& ctx, const TrainOptions& o) {
  std::optional<CodebookStack> stack;
  const auto corpus = load_align_corpus(ctx, o, stack);
  AlignmentConfig cfg;
  cfg.temperature = o.tau;
  cfg.lambda_align = o.lambda;
  cfg.batch_size = o.batch;
  cfg.validate();

  const auto& eval_set = corpus.heldout.empty() ? corpus.train : corpus.heldout;
  const int token_dim = static_cast<int>(corpus.train.front().tokens.cols());
  const int embed_dim = static_cast<int>(corpus.train.front().text_segments.front().size());
  const auto init = AggregatorParams::init(token_dim, embed_dim, ctx.stream("cli/params"));
  const double untrained = intra_sample_retrieval_top1(eval_set, init);

  std::optional<SoftmaxRegressionPredictor> predictor;
  if (stack) predictor.emplace(stack->books[0].size(), embed_dim);
  Rng mask_rng(ctx.stream("cli/mask"));
  std::vector<double> mask_curve;

  std::string curve = "step,loss,metric\n";
  ToyTrainOptions opt;
  opt.steps = o.steps;
  opt.learning_rate = o.lr;
  opt.momentum = o.momentum;
  opt.loss = parse_loss_kind(o.loss);
  opt.seed = ctx.stream("cli/train");
  opt.on_step = [&](int step, double align_loss, const AggregatorParams& params) {
    double mask = 0.0;
    if (predictor) {
      // one masked-token step per sample of an independent minibatch
      const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(o.batch), corpus.train.size());
      for (std::size_t b = 0; b < bs; ++b) {
        const auto k = static_cast<std::size_t>(mask_rng.below(corpus.train.size()));
        const auto& base = corpus.train_base[k];
        const double ratio = std::clamp(std::cos(0.5 * std::numbers::pi * mask_rng.uniform()), 1e-6, 1.0);
        const auto state = mask_random(base, ratio, mask_rng.next_u64());
        const Matrix cond = rows_matrix(corpus.train[k].text_segments);
        mask += predictor->train_step(cond, base, state, o.mask_lr) / static_cast<double>(state.masked.size());
      }
      mask /= static_cast<double>(bs);
      mask_curve.push_back(mask);
    }
    const double metric = intra_sample_retrieval_top1(eval_set, params);
    curve += std::to_string(step) + "," + fmt(mask + align_loss) + "," + fmt(metric) + "\n";
  };
  const auto res = toy_train(corpus.train, cfg, opt, init);
  const double final_top1 = intra_sample_retrieval_top1(eval_set, res.params);

  ctx.write("params.json", to_json(res.params).dump() + "\n");
  ctx.write("curve.csv", curve);
  if (predictor) {
    std::string mc = "step,mask_loss\n";
    for (std::size_t i = 0; i < mask_curve.size(); ++i) mc += std::to_string(i) + "," + fmt(mask_curve[i]) + "\n";
    ctx.write("mask_curve.csv", mc);
    ctx.write("predictor.json", to_json(*predictor).dump() + "\n");
  }
  nlohmann::ordered_json report;
  report["loss_kind"] = to_string(opt.loss);
  report["lambda_align"] = o.lambda;
  report["temperature"] = o.tau;
  report["steps"] = o.steps;
  report["initial_loss"] = res.curve.empty() ? 0.0 : res.curve.front();
  report["final_loss"] = res.curve.empty() ? 0.0 : res.curve.back();
  report["untrained_top1"] = untrained;
  report["heldout_top1"] = final_top1;
  if (predictor) report["final_mask_loss"] = mask_curve.empty() ? 0.0 : mask_curve.back();
  ctx.write("train_report.json", report.dump(2) + "\n");
  ctx.log("held-out top-1 " + fmt(untrained) + " -> " + fmt(final_top1));

  Outcome out;
  out.summary["heldout_top1"] = final_top1;
  out.summary["untrained_top1"] = untrained;
  return out;
}

// ---------------------------------------------------------------------------
// decode

struct DecodeCliOptions {
  std::string data;
  std::string codebooks;
  std::string predictor;
  int iters = 10;
  bool sample = false;
  int ratio = kDefaultDownsampleRatio;
  int length = 0;
};

Outcome cmd_decode(RunContext& ctx, const DecodeCliOptions& o) {
  require(!o.codebooks.empty() && !o.predictor.empty(), ErrorCode::Precondition, "decode needs --codebooks and --predictor");
  const auto ds = DatasetDir::open(o.data);
  const auto stack = codebook_stack_from_json(nlohmann::json::parse(io::read_file(o.codebooks)));
  const auto predictor = predictor_from_json(nlohmann::json::parse(io::read_file(o.predictor)));

  std::string tokens, trace;
  int hits = 0, total = 0;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    const auto lat = ds.latents(r, o.ratio);
    const int length = o.length > 0 ? o.length : lat.length();
    DecodeOptions opt{o.iters, o.sample, derive_seed(ctx.seed(), "cli/decode/" + r.id)};
    const auto res = iterative_decode(rows_matrix(record_embeddings(r)), length, predictor, opt);
    if (length == lat.length()) {
      const auto truth = quantize(lat, stack).tokens.layers[0];
      for (int p = 0; p < length; ++p) hits += res.tokens[p] == truth[p];
      total += length;
    }
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["tokens"] = res.tokens;
    tokens += j.dump() + "\n";
    for (const auto& step : res.trace) {
      nlohmann::ordered_json t;
      t["id"] = r.id;
      t["iteration"] = step.iteration;
      t["masked_count"] = step.masked_count;
      t["fixed"] = step.fixed;
      trace += t.dump() + "\n";
    }
    const auto motion = reconstruct_motion(dequantize(TokenSequence{{res.tokens}}, stack), o.ratio);
    ctx.write("decoded/" + r.id + ".sgmo", encode_motion(motion));
  }
  ctx.write("decoded_tokens.jsonl", tokens);
  ctx.write("decode_trace.jsonl", trace);
  EvalReport rep;
  if (total > 0) rep.set("base_token_accuracy", static_cast<double>(hits) / total);
  rep.set("records", static_cast<double>(ds.records.size()));
  ctx.write("decode_report.csv", rep.to_csv());

  Outcome out;
  out.summary["records"] = ds.records.size();
  if (total > 0) out.summary["base_token_accuracy"] = static_cast<double>(hits) / total;
  return out;
}

// ---------------------------------------------------------------------------
// ground / retrieve

struct GroundOptions {
  std::string data;
  std::string model;
  std::string id;
  int window = kDefaultGroundingWindow;
  int stride = 1;
  int ratio = kDefaultDownsampleRatio;
};

AggregatorParams load_model(const std::string& path) {
  require(!path.empty(), ErrorCode::Precondition, "--model is required");
  return aggregator_from_json(nlohmann::json::parse(io::read_file(path)));
}

Outcome cmd_ground(RunContext& ctx, const GroundOptions& o) {
  const auto ds = DatasetDir::open(o.data);
  const auto model = load_model(o.model);
  const DatasetRecord* rec = nullptr;
  for (const auto& r : ds.records)
    if (o.id.empty() || r.id == o.id) {
      rec = &r;
      break;
    }
  require(rec != nullptr, ErrorCode::Validation, "no record '" + o.id + "'");
  const auto lat = ds.latents(*rec, o.ratio);
  std::vector<GroundingResult> rows;
  nlohmann::ordered_json j;
  j["id"] = rec->id;
  j["tokens"] = lat.length();
  j["window"] = o.window;
  j["segments"] = nlohmann::ordered_json::array();
  const auto emb = record_embeddings(*rec);
  for (std::size_t s = 0; s < emb.size(); ++s) {
    rows.push_back(motion_grounding({emb[s], o.window, o.stride}, lat.vectors, model));
    j["segments"].push_back({{"text", rec->text_segments[s]}, {"best_start", rows.back().best_start}});
  }
  ctx.write("similarity_map.csv", similarity_map_csv(rows));
  ctx.write("ground.json", j.dump(2) + "\n");
  Outcome out;
  out.summary["id"] = rec->id;
  out.summary["windows"] = rows.front().starts.size();
  return out;
}

struct RetrieveOptions {
  std::string data;
  std::string model;
  std::string boundaries;
  int ratio = kDefaultDownsampleRatio;
};

Outcome cmd_retrieve(RunContext& ctx, const RetrieveOptions& o) {
  const auto ds = DatasetDir::open(o.data);
  const auto model = load_model(o.model);
  const auto spans = ds.truth_or(o.boundaries);

  // corpus-wide candidates: every distinct segment text with its first embedding
  std::vector<std::string> texts;
  std::vector<Vector> cand;
  std::map<std::string, int> index;
  for (const auto& r : ds.records) {
    const auto emb = record_embeddings(r);
    for (std::size_t s = 0; s < emb.size(); ++s)
      if (index.emplace(r.text_segments[s], static_cast<int>(texts.size())).second) {
        texts.push_back(r.text_segments[s]);
        cand.push_back(emb[s]);
      }
  }

  std::string results;
  int intra = 0, corpus_hits = 0, total = 0;
  for (const auto& r : ds.records) {
    const auto lat = ds.latents(r, o.ratio);
    const auto& b = find_boundaries(spans, r.id);
    require(b.count() == static_cast<int>(r.text_segments.size()), ErrorCode::Validation,
            "record '" + r.id + "' boundaries do not match its segments");
    const auto emb = record_embeddings(r);
    for (int s = 0; s < b.count(); ++s) {
      const Vector m = aggregate_mean_max(detail::span_rows(lat.vectors, b.spans[s]), model);
      const int own = m2t_retrieve(m, emb);
      const int global = m2t_retrieve(m, cand);
      intra += own == s;
      corpus_hits += texts[global] == r.text_segments[s];
      ++total;
      nlohmann::ordered_json j;
      j["id"] = r.id;
      j["segment"] = s;
      j["intra_sample"] = own;
      j["corpus_text"] = texts[global];
      results += j.dump() + "\n";
    }
  }
  EvalReport rep;
  rep.set("queries", total);
  rep.set("intra_sample_top1", total ? static_cast<double>(intra) / total : 0.0);
  rep.set("corpus_top1", total ? static_cast<double>(corpus_hits) / total : 0.0);
  ctx.write("retrieve_results.jsonl", results);
  ctx.write("retrieve_report.csv", rep.to_csv());
  Outcome out;
  out.summary["intra_sample_top1"] = rep.values["intra_sample_top1"];
  out.summary["corpus_top1"] = rep.values["corpus_top1"];
  return out;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string metric = "all";
  std::string real, gen, text;
  std::string data, model, boundaries;
  int pairs = kDiversityPairs;
  int topk = 3;
  int ratio = kDefaultDownsampleRatio;
};

Outcome cmd_eval(RunContext& ctx, const EvalOptions& o) {
  static const std::set<std::string> kMetrics{"all", "fid", "diversity", "r_precision", "mm_dist", "isc"};
  require(kMetrics.contains(o.metric), ErrorCode::Validation, "unknown metric '" + o.metric + "'");
  const bool all = o.metric == "all";
  auto want = [&](const char* m) { return all || o.metric == m; };
  auto need = [&](const std::string& v, const char* flag, const char* metric) {
    require(!v.empty(), ErrorCode::Precondition, std::string(metric) + " needs " + flag);
  };

  EvalReport rep;
  rep.metadata["seed"] = std::to_string(ctx.seed());
  rep.metadata["metric"] = o.metric;
  std::optional<Matrix> real, gen, text;
  if (!o.real.empty()) real = read_matrix_csv(o.real);
  if (!o.gen.empty()) gen = read_matrix_csv(o.gen);
  if (!o.text.empty()) text = read_matrix_csv(o.text);

  if (want("fid") && (!all || (real && gen))) {
    need(o.real, "--real", "fid");
    need(o.gen, "--gen", "fid");
    rep.set("fid", fid(*real, *gen));
  }
  if (want("diversity") && (!all || gen)) {
    need(o.gen, "--gen", "diversity");
    rep.set("diversity", diversity(*gen, o.pairs, ctx.stream("cli/diversity")));
  }
  if (want("r_precision") && (!all || (text && gen))) {
    need(o.text, "--text", "r_precision");
    need(o.gen, "--gen", "r_precision");
    for (int k = 1; k <= o.topk; ++k) {
      const auto r = r_precision(*text, *gen, k);
      rep.set("r_precision_top" + std::to_string(k), r.value);
      if (r.small_pool_warning) rep.metadata["r_precision_warning"] = "fewer samples than one pool";
    }
  }
  if (want("mm_dist") && (!all || (text && gen))) {
    need(o.text, "--text", "mm_dist");
    need(o.gen, "--gen", "mm_dist");
    rep.set("mm_dist", mm_dist(*text, *gen));
  }
  if (want("isc") && (!all || (!o.data.empty() && !o.model.empty()))) {
    need(o.data, "--data", "isc");
    need(o.model, "--model", "isc");
    const auto ds = DatasetDir::open(o.data);
    const auto model = load_model(o.model);
    const auto spans = ds.truth_or(o.boundaries);
    std::vector<std::pair<Vector, Vector>> pairs;
    for (const auto& r : ds.records) {
      const auto lat = ds.latents(r, o.ratio);
      const auto emb = record_embeddings(r);
      const auto& b = find_boundaries(spans, r.id);
      require(b.count() == static_cast<int>(emb.size()), ErrorCode::Validation,
              "record '" + r.id + "' boundaries do not match its segments");
      for (int s = 0; s < b.count(); ++s)
        pairs.emplace_back(emb[s], aggregate_mean_max(detail::span_rows(lat.vectors, b.spans[s]), model));
    }
    rep.set("isc", isc_score(pairs));
  }
  require(!rep.values.empty(), ErrorCode::Precondition, "no metric could be computed from the given inputs");
  ctx.write("eval.csv", rep.to_csv());
  ctx.write("eval.json", rep.to_json().dump(2) + "\n");
  Outcome out;
  for (const auto& [k, v] : rep.values) out.summary[k] = v;
  return out;
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> effective_options(const CLI::App* sub) {
  std::map<std::string, std::string> out;
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (name == "help") continue;
    std::string v;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) v += (v.empty() ? "" : " ") + r;
    } else {
      v = opt->get_default_str();
    }
    out[name] = v;
  }
  return out;
}

void print_error(const std::string& code, const std::string& message) {
  nlohmann::ordered_json j;
  j["status"] = "error";
  j["code"] = code;
  j["message"] = message;
  std::cerr << j.dump() << std::endl;
}

int run(int argc, char** argv) {
  const std::vector<std::string> subcommands{"synth", "decompose", "quantize", "segment", "train-align",
                                             "decode", "ground", "retrieve", "eval"};
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = merge_config(args, subcommands);
  } catch (const Error& e) {
    print_error(to_string(e.code()), e.what());
    return 2;
  }

  CLI::App app{"segalign: text-segment motion alignment pipelines"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  auto* seed_opt = app.add_option("--seed", g.seed, "root seed; every random stream derives from it");
  app.add_option("--config", g.config, "JSON config; explicit flags win");
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_flag("--quiet", g.quiet, "suppress progress messages");

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic corpus");
  c_synth->add_option("--spec", synth.spec, "corpus spec JSON");
  c_synth->add_option("--sequences", synth.sequences);
  c_synth->add_option("--min-segments", synth.min_segments);
  c_synth->add_option("--max-segments", synth.max_segments);
  c_synth->add_option("--tokens-per-segment", synth.tokens_per_segment);
  c_synth->add_option("--jitter-frames", synth.jitter_frames);
  c_synth->add_option("--noise-std", synth.noise_std);

  DecomposeOptions dec;
  auto* c_dec = app.add_subcommand("decompose", "split dataset texts into segments");
  c_dec->add_option("--data", dec.data, "dataset directory")->required();
  c_dec->add_flag("--fallback", dec.fallback, "rule-based splitter, no network");
  c_dec->add_option("--endpoint", dec.endpoint, "chat-completions base URL (default: $SEGALIGN_LLM_URL or local)");
  c_dec->add_option("--model", dec.model)->capture_default_str();
  c_dec->add_option("--cache", dec.cache, "response cache (default: <out>/llm_cache.jsonl)");
  c_dec->add_option("--max-segments", dec.max_segments)->capture_default_str();
  c_dec->add_option("--timeout-ms", dec.timeout_ms)->capture_default_str();
  c_dec->add_option("--retries", dec.retries)->capture_default_str();

  QuantizeOptions qo;
  auto* c_q = app.add_subcommand("quantize", "train residual codebooks and tokenize motions");
  c_q->add_option("--data", qo.data)->required();
  c_q->add_option("--layers", qo.layers)->capture_default_str();
  c_q->add_option("--codes", qo.codes)->capture_default_str();
  c_q->add_option("--ratio", qo.ratio)->capture_default_str();
  c_q->add_option("--iters", qo.iters)->capture_default_str();

  SegmentOptions so;
  auto* c_seg = app.add_subcommand("segment", "segment latent sequences and score against truth");
  c_seg->add_option("--data", so.data)->required();
  c_seg->add_option("--method", so.method, "uniform | cpd | cluster")->capture_default_str();
  c_seg->add_option("--library", so.library, "primitive library JSON (cluster)");
  c_seg->add_flag("--build-library", so.build_library, "fit the library on this dataset and write it to --library");
  c_seg->add_option("--truth", so.truth, "ground-truth boundaries (default: <data>/truth.json)");
  c_seg->add_option("--ratio", so.ratio)->capture_default_str();
  c_seg->add_option("--window", so.window)->capture_default_str();
  c_seg->add_option("--stride", so.stride)->capture_default_str();
  c_seg->add_option("--primitives", so.primitives)->capture_default_str();
  c_seg->add_option("--iters", so.iters)->capture_default_str();
  c_seg->add_option("--bandwidth", so.bandwidth, "kernel bandwidth (default: median heuristic)");

  TrainOptions to;
  auto* c_train = app.add_subcommand("train-align", "train the segment aggregator (and optionally the token predictor)");
  c_train->add_option("--data", to.data, "dataset directory (default: built-in separable task)");
  c_train->add_option("--loss", to.loss, "sample | batch | global | token")->capture_default_str();
  c_train->add_option("--lambda", to.lambda)->capture_default_str();
  c_train->add_option("--tau", to.tau)->capture_default_str();
  c_train->add_option("--steps", to.steps)->capture_default_str();
  c_train->add_option("--lr", to.lr)->capture_default_str();
  c_train->add_option("--momentum", to.momentum)->capture_default_str();
  c_train->add_option("--batch", to.batch)->capture_default_str();
  c_train->add_option("--boundaries", to.boundaries, "training spans (default: <data>/truth.json)");
  c_train->add_option("--heldout", to.heldout, "held-out fraction")->capture_default_str();
  c_train->add_option("--codebooks", to.codebooks, "also train a base-token predictor on these codebooks");
  c_train->add_option("--mask-lr", to.mask_lr)->capture_default_str();
  c_train->add_option("--ratio", to.ratio)->capture_default_str();

  DecodeCliOptions dco;
  auto* c_decode = app.add_subcommand("decode", "iteratively decode base tokens from text segments");
  c_decode->add_option("--data", dco.data)->required();
  c_decode->add_option("--codebooks", dco.codebooks)->required();
  c_decode->add_option("--predictor", dco.predictor)->required();
  c_decode->add_option("--iters", dco.iters)->capture_default_str();
  c_decode->add_flag("--sample", dco.sample, "sample instead of argmax");
  c_decode->add_option("--ratio", dco.ratio)->capture_default_str();
  c_decode->add_option("--length", dco.length, "tokens to decode (default: motion length)");

  GroundOptions go;
  auto* c_ground = app.add_subcommand("ground", "sliding-window grounding of text segments in one motion");
  c_ground->add_option("--data", go.data)->required();
  c_ground->add_option("--model", go.model)->required();
  c_ground->add_option("--id", go.id, "record id (default: first record)");
  c_ground->add_option("--window", go.window)->capture_default_str();
  c_ground->add_option("--stride", go.stride)->capture_default_str();
  c_ground->add_option("--ratio", go.ratio)->capture_default_str();

  RetrieveOptions ro;
  auto* c_ret = app.add_subcommand("retrieve", "motion-to-text retrieval of every motion segment");
  c_ret->add_option("--data", ro.data)->required();
  c_ret->add_option("--model", ro.model)->required();
  c_ret->add_option("--boundaries", ro.boundaries);
  c_ret->add_option("--ratio", ro.ratio)->capture_default_str();

  EvalOptions eo;
  auto* c_eval = app.add_subcommand("eval", "generation and consistency metrics");
  c_eval->add_option("--metric", eo.metric, "all | fid | diversity | r_precision | mm_dist | isc")->capture_default_str();
  c_eval->add_option("--real", eo.real, "real motion features (CSV)");
  c_eval->add_option("--gen", eo.gen, "generated motion features (CSV)");
  c_eval->add_option("--text", eo.text, "text features paired with --gen rows (CSV)");
  c_eval->add_option("--data", eo.data);
  c_eval->add_option("--model", eo.model);
  c_eval->add_option("--boundaries", eo.boundaries);
  c_eval->add_option("--pairs", eo.pairs)->capture_default_str();
  c_eval->add_option("--topk", eo.topk)->capture_default_str();
  c_eval->add_option("--ratio", eo.ratio)->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  CLI::App* sub = app.get_subcommands().front();
  RunContext ctx(sub->get_name(), g.seed, g.out, g.quiet);
  auto opts = effective_options(sub);
  opts["seed"] = std::to_string(g.seed);
  ctx.set_options(opts);
  try {
    Outcome out;
    const std::string name = sub->get_name();
    if (name == "synth") out = cmd_synth(ctx, synth, seed_opt->count() > 0);
    else if (name == "decompose") out = cmd_decompose(ctx, dec);
    else if (name == "quantize") out = cmd_quantize(ctx, qo);
    else if (name == "segment") out = cmd_segment(ctx, so);
    else if (name == "train-align") out = cmd_train_align(ctx, to);
    else if (name == "decode") out = cmd_decode(ctx, dco);
    else if (name == "ground") out = cmd_ground(ctx, go);
    else if (name == "retrieve") out = cmd_retrieve(ctx, ro);
    else out = cmd_eval(ctx, eo);
    ctx.write_manifest();

    nlohmann::ordered_json j;
    j["status"] = out.rejected.empty() ? "ok" : "rejected";
    j["command"] = name;
    j["summary"] = out.summary;
    if (!out.rejected.empty()) j["rejected"] = out.rejected.list;
    (out.rejected.empty() ? std::cout : std::cerr) << j.dump() << std::endl;
    return out.rejected.empty() ? 0 : 3;
  } catch (const Error& e) {
    print_error(to_string(e.code()), e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    print_error("Validation", e.what());
    return 2;
  } catch (const std::exception& e) {
    print_error("Internal", e.what());
    return 1;
  }
}

}  // namespace
}  // namespace segalign::cli

int main(int argc, char** argv) { return segalign::cli::run(argc, argv); }
