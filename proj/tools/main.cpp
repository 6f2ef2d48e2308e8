#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "chardec/attribution.hpp"
#include "chardec/beam.hpp"
#include "chardec/config.hpp"
#include "chardec/encoder.hpp"
#include "chardec/error.hpp"
#include "chardec/io.hpp"
#include "chardec/metrics.hpp"
#include "chardec/ngram_lm.hpp"
#include "chardec/optim.hpp"
#include "chardec/pipeline.hpp"
#include "chardec/rate_model.hpp"
#include "chardec/rng.hpp"
#include "chardec/stimulus.hpp"
#include "chardec/synth.hpp"

namespace fs = std::filesystem;
using namespace chardec;

namespace {

// Fixed rendering alphabet for synthetic char ids; the vocab file written by
// `synth` maps these glyphs back to ids, so text stays round-trippable.
const std::string kAlphabet =
    "abcdefghijklmnopqrstuvwxyz0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ.,;:!?'-";

std::vector<std::string> render_vocab(int vocab) {
  if (vocab > static_cast<int>(kAlphabet.size())) {
    throw ConfigError("vocab of " + std::to_string(vocab) + " exceeds the " +
                      std::to_string(kAlphabet.size()) + "-glyph rendering alphabet");
  }
  std::vector<std::string> chars;
  chars.reserve(static_cast<std::size_t>(vocab));
  for (int i = 0; i < vocab; ++i) chars.emplace_back(1, kAlphabet[static_cast<std::size_t>(i)]);
  return chars;
}

std::string render_text(const std::vector<int>& ids, const std::vector<std::string>& chars) {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= static_cast<int>(chars.size())) {
      throw DataError("char id " + std::to_string(id) + " is outside the vocab");
    }
    out += chars[static_cast<std::size_t>(id)];
  }
  return out;
}

// Maps raw text onto vocab ids; line breaks are formatting, other unmapped
// bytes are counted so the caller can warn.
std::vector<int> ids_from_text(const std::string& text, const std::vector<std::string>& chars,
                               std::int64_t* skipped) {
  std::map<char, int> index;
  for (std::size_t i = 0; i < chars.size(); ++i) {
    if (chars[i].size() != 1) {
      throw DataError("vocab entry " + std::to_string(i) + " is not a single character");
    }
    if (!index.emplace(chars[i][0], static_cast<int>(i)).second) {
      throw DataError("vocab repeats the character '" + chars[i] + "'");
    }
  }
  std::vector<int> ids;
  ids.reserve(text.size());
  for (char ch : text) {
    if (ch == '\n' || ch == '\r') continue;
    auto it = index.find(ch);
    if (it == index.end()) {
      ++*skipped;
      continue;
    }
    ids.push_back(it->second);
  }
  return ids;
}

std::string read_text_file(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

std::string path_tail(const std::string& path) { return fs::path(path).filename().string(); }

void record_input(Manifest& m, const std::string& path) {
  m.inputs[path_tail(path)] = file_digest(path);
}

void record_output(Manifest& m, const std::string& path) {
  m.outputs[path_tail(path)] = file_digest(path);
}

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

double need_param(const Manifest& m, const std::string& key) {
  auto it = m.params.find(key);
  if (it == m.params.end()) throw DataError("manifest: missing param '" + key + "'");
  return it->second;
}

std::uint64_t need_seed(const Manifest& m, const std::string& key) {
  auto it = m.seeds.find(key);
  if (it == m.seeds.end()) throw DataError("manifest: missing seed '" + key + "'");
  return it->second;
}

// ---- synth ----

struct SynthOpts {
  std::string out;
  std::string from_manifest;
  std::uint64_t seed = 0;
  std::uint64_t subject_seed = 0;  // 0 derives from --seed
  std::uint64_t stimulus_seed = 0;
  int session = 0;
  int vocab = 50;
  int dim = 8;
  int edge = 16;
  int regions = 10;
  std::vector<int> signal_regions{7};
  int acquisitions = 240;
  int segment = 8;
  int max_rate = 2;
  double skew = 3.0;
  double sigma = 0.1;
  double eps = 0.1;
  double gain = 1.0;
  double tr = 1.5;
};

void run_synth(SynthOpts opt) {
  if (!opt.from_manifest.empty()) {
    const Manifest m = read_manifest(opt.from_manifest);
    opt.seed = need_seed(m, "world");
    opt.subject_seed = need_seed(m, "subject");
    opt.stimulus_seed = need_seed(m, "stimulus");
    opt.session = static_cast<int>(need_seed(m, "session"));
    opt.vocab = static_cast<int>(need_param(m, "vocab"));
    opt.dim = static_cast<int>(need_param(m, "dim"));
    opt.edge = static_cast<int>(need_param(m, "edge"));
    opt.regions = static_cast<int>(need_param(m, "regions"));
    opt.acquisitions = static_cast<int>(need_param(m, "acquisitions"));
    opt.segment = static_cast<int>(need_param(m, "segment"));
    opt.max_rate = static_cast<int>(need_param(m, "max_rate"));
    opt.skew = need_param(m, "skew");
    opt.sigma = need_param(m, "sigma");
    opt.eps = need_param(m, "eps");
    opt.gain = need_param(m, "gain");
    opt.tr = m.config.tr;
    opt.signal_regions.clear();
    for (int r = 0; r < static_cast<int>(need_param(m, "signal_count")); ++r) {
      opt.signal_regions.push_back(
          static_cast<int>(need_param(m, "signal_region_" + std::to_string(r))));
    }
  }
  if (opt.subject_seed == 0) opt.subject_seed = mix_seed(opt.seed, 3);
  if (opt.stimulus_seed == 0) opt.stimulus_seed = mix_seed(opt.seed, 4);

  const AtlasVolume atlas = make_slab_atlas(opt.edge, opt.edge, opt.edge, opt.regions);
  const EmbeddingTable table = random_embeddings(opt.vocab, opt.dim, mix_seed(opt.seed, 1));
  const MarkovChain chain = MarkovChain::random(opt.vocab, opt.skew, mix_seed(opt.seed, 2));
  const SubjectSpec subject = make_subject(opt.subject_seed, atlas, opt.signal_regions,
                                           opt.sigma, opt.eps, opt.dim, opt.gain);
  const AcquisitionGrid grid{opt.tr, opt.acquisitions};
  const std::vector<int> counts =
      bursty_counts(opt.acquisitions, opt.segment, opt.max_rate, mix_seed(opt.stimulus_seed, 1));
  const Transcript transcript =
      make_transcript(counts, grid, chain, mix_seed(opt.stimulus_seed, 2));
  const SessionResult session = simulate_session(transcript, table, grid, subject, opt.session);

  fs::create_directories(opt.out);
  const std::string volumes_path = (fs::path(opt.out) / "volumes.bvol").string();
  const std::string atlas_path = (fs::path(opt.out) / "atlas.atls").string();
  const std::string embt_path = (fs::path(opt.out) / "embeddings.embt").string();
  const std::string transcript_path = (fs::path(opt.out) / "transcript.tsv").string();
  const std::string vocab_path = (fs::path(opt.out) / "vocab.tsv").string();
  write_bvol(volumes_path, session.volumes);
  write_atlas(atlas_path, atlas);
  write_embeddings(embt_path, table);
  write_transcript(transcript_path, transcript);
  write_vocab(vocab_path, render_vocab(opt.vocab));

  Manifest m;
  m.command = "synth";
  m.config.tr = opt.tr;
  m.seeds = {{"world", opt.seed},
             {"subject", opt.subject_seed},
             {"stimulus", opt.stimulus_seed},
             {"session", static_cast<std::uint64_t>(opt.session)}};
  m.params = {{"vocab", static_cast<double>(opt.vocab)},
              {"dim", static_cast<double>(opt.dim)},
              {"edge", static_cast<double>(opt.edge)},
              {"regions", static_cast<double>(opt.regions)},
              {"acquisitions", static_cast<double>(opt.acquisitions)},
              {"segment", static_cast<double>(opt.segment)},
              {"max_rate", static_cast<double>(opt.max_rate)},
              {"skew", opt.skew},
              {"sigma", opt.sigma},
              {"eps", opt.eps},
              {"gain", opt.gain},
              {"signal_count", static_cast<double>(opt.signal_regions.size())}};
  for (std::size_t r = 0; r < opt.signal_regions.size(); ++r) {
    m.params["signal_region_" + std::to_string(r)] = opt.signal_regions[r];
  }
  m.metrics = {{"snr", session.snr},
               {"rms_signal", session.rms_signal},
               {"rms_noise", session.rms_noise},
               {"chars", static_cast<double>(transcript.entries.size())}};
  record_output(m, volumes_path);
  record_output(m, atlas_path);
  record_output(m, embt_path);
  record_output(m, transcript_path);
  record_output(m, vocab_path);
  write_manifest((fs::path(opt.out) / "manifest.json").string(), m);

  std::printf("wrote %d acquisitions, %zu chars, snr %.3f to %s\n", opt.acquisitions,
              transcript.entries.size(), session.snr, opt.out.c_str());

  if (!opt.from_manifest.empty()) {
    const Manifest original = read_manifest(opt.from_manifest);
    for (const auto& [name, digest] : original.outputs) {
      const auto it = m.outputs.find(name);
      if (it == m.outputs.end() || it->second != digest) {
        throw DataError("reproduction mismatch for " + name);
      }
    }
    std::printf("reproduced %zu files bit-identically\n", original.outputs.size());
  }
}

// ---- train-lm ----

struct TrainLmOpts {
  std::vector<std::string> text;
  std::string vocab;
  std::string out;
  int order = 4;
  double discount = 0.75;
  int cap = 50;
};

void run_train_lm(const TrainLmOpts& opt) {
  const std::vector<std::string> chars = read_vocab(opt.vocab);
  std::vector<std::vector<int>> docs;
  std::int64_t skipped = 0;
  std::int64_t total = 0;
  for (const std::string& path : opt.text) {
    docs.push_back(ids_from_text(read_text_file(path), chars, &skipped));
    total += static_cast<std::int64_t>(docs.back().size());
  }
  if (skipped > 0) {
    std::cerr << "warning: skipped " << skipped << " characters outside the vocab\n";
  }
  NgramConfig cfg;
  cfg.order = opt.order;
  cfg.discount = opt.discount;
  cfg.context_cap = opt.cap;
  const NgramModel lm = NgramModel::train(docs, static_cast<int>(chars.size()), cfg);
  save_lm(opt.out, lm);

  Manifest m;
  m.command = "train-lm";
  m.params = {{"order", static_cast<double>(opt.order)},
              {"discount", opt.discount},
              {"cap", static_cast<double>(opt.cap)}};
  m.metrics = {{"docs", static_cast<double>(docs.size())},
               {"chars", static_cast<double>(total)},
               {"skipped", static_cast<double>(skipped)}};
  for (const std::string& path : opt.text) record_input(m, path);
  record_input(m, opt.vocab);
  record_output(m, opt.out);
  write_manifest(opt.out + ".manifest.json", m);

  std::printf("trained order-%d model on %zu docs (%lld chars), vocab %zu\n", opt.order,
              docs.size(), static_cast<long long>(total), chars.size());
}

// ---- train-encoder ----

struct TrainEncoderOpts {
  std::string volumes;
  std::string embeddings;
  std::string transcript;
  std::string out;
  std::string config;
  std::vector<int> kernels{3, 3, 1};
  std::vector<int> filters{6, 12, 32};
  int latent = 0;  // 0 follows the embedding dim
  std::uint64_t seed = 0;
};

void run_train_encoder(const TrainEncoderOpts& opt) {
  if (opt.kernels.size() != 3 || opt.filters.size() != 3) {
    throw ConfigError("--kernels and --filters need exactly three values");
  }
  const RunConfig cfg = config_or_default(opt.config);
  const VolumeSeries volumes = read_bvol(opt.volumes);
  const EmbeddingTable table = read_embeddings(opt.embeddings);
  const Transcript transcript = read_transcript(opt.transcript);

  EncoderConfig ecfg;
  ecfg.input_dims = {volumes.x, volumes.y, volumes.z};
  ecfg.kernel_edges = {opt.kernels[0], opt.kernels[1], opt.kernels[2]};
  ecfg.filters = {opt.filters[0], opt.filters[1], opt.filters[2]};
  ecfg.latent_dim = opt.latent > 0 ? opt.latent : table.dim;
  if (ecfg.latent_dim != table.dim) {
    throw ConfigError("latent dim must match the embedding dim to regress onto it");
  }

  StimulusConfig scfg;
  scfg.delay_weights = cfg.weights;
  SessionDataset ds = make_dataset(volumes, transcript, table, scfg);

  EncoderParams params = EncoderParams::init(ecfg, mix_seed(opt.seed, 1));
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch;
  tc.lr = cfg.lr;
  tc.beta = cfg.beta;
  tc.kl_scale = cfg.kl_scale;
  tc.clip_lo = -cfg.clip;
  tc.clip_hi = cfg.clip;
  tc.seed = mix_seed(opt.seed, 2);
  const TrainHistory history = train_encoder(params, ds.view, tc);
  for (std::size_t e = 0; e < history.size(); ++e) {
    std::printf("epoch %zu loss %.6f align %.6f kl %.6f\n", e + 1, history[e].mean_loss,
                history[e].mean_align, history[e].mean_kl);
  }
  save_encoder(opt.out, params);

  Manifest m;
  m.command = "train-encoder";
  m.config = cfg;
  m.seeds = {{"init", mix_seed(opt.seed, 1)}, {"train", mix_seed(opt.seed, 2)}};
  m.params = {{"k0", static_cast<double>(opt.kernels[0])},
              {"k1", static_cast<double>(opt.kernels[1])},
              {"k2", static_cast<double>(opt.kernels[2])},
              {"f0", static_cast<double>(opt.filters[0])},
              {"f1", static_cast<double>(opt.filters[1])},
              {"f2", static_cast<double>(opt.filters[2])},
              {"latent", static_cast<double>(ecfg.latent_dim)}};
  if (!history.empty()) {
    m.metrics = {{"final_loss", history.back().mean_loss},
                 {"final_align", history.back().mean_align},
                 {"final_kl", history.back().mean_kl}};
  }
  record_input(m, opt.volumes);
  record_input(m, opt.embeddings);
  record_input(m, opt.transcript);
  record_output(m, opt.out);
  write_manifest(opt.out + ".manifest.json", m);
}

// ---- train-rate ----

struct TrainRateOpts {
  std::string volumes;
  std::string transcript;
  std::string out;
  std::string config;
};

void run_train_rate(const TrainRateOpts& opt) {
  const RunConfig cfg = config_or_default(opt.config);
  const VolumeSeries volumes = read_bvol(opt.volumes);
  const Transcript transcript = read_transcript(opt.transcript);
  const std::vector<int> counts = true_counts(transcript, volumes.grid());
  const DesignMatrix design = assemble_design(volumes, cfg.delays);
  std::vector<double> rates(static_cast<std::size_t>(design.rows));
  for (int i = 0; i < design.rows; ++i) rates[static_cast<std::size_t>(i)] = counts[i];
  const RateModel model = ridge_fit(design, rates);
  save_rate_model(opt.out, model);

  Manifest m;
  m.command = "train-rate";
  m.config = cfg;
  m.metrics = {{"lambda", model.lambda},
               {"cv_r", model.cv_r},
               {"rows", static_cast<double>(design.rows)}};
  record_input(m, opt.volumes);
  record_input(m, opt.transcript);
  record_output(m, opt.out);
  write_manifest(opt.out + ".manifest.json", m);

  std::printf("lambda %g, cross-validated r %.4f over %d rows\n", model.lambda, model.cv_r,
              design.rows);
}

// ---- decode ----

struct DecodeOpts {
  std::string volumes;
  std::string encoder;
  std::string rate;
  std::string lm;
  std::string embeddings;
  std::string vocab;
  std::string out;
  std::string config;
  std::uint64_t seed = 0;
  int expansions = 8;
};

void run_decode(const DecodeOpts& opt) {
  const RunConfig cfg = config_or_default(opt.config);
  const VolumeSeries volumes = read_bvol(opt.volumes);
  const EncoderParams params = load_encoder(opt.encoder);
  const RateModel rate = load_rate_model(opt.rate);
  const NgramModel lm = load_lm(opt.lm);
  const EmbeddingTable table = read_embeddings(opt.embeddings);

  const Tensor z = encode_series(params, volumes);
  const std::vector<int> counts = predict_counts(volumes, rate);
  DecodeConfig dc;
  dc.beam = cfg.k;
  dc.rho = cfg.rho;
  dc.eta = cfg.eta;
  dc.expansions = opt.expansions;
  dc.seed = opt.seed;
  const DecodeResult res = decode(z, counts, lm, table, volumes.grid(), dc);

  fs::create_directories(opt.out);
  const std::string tsv_path = (fs::path(opt.out) / "decoded.tsv").string();
  write_transcript(tsv_path, res.transcript);

  Manifest m;
  m.command = "decode";
  m.config = cfg;
  m.seeds = {{"decode", opt.seed}};
  m.params = {{"expansions", static_cast<double>(opt.expansions)}};
  m.metrics = {{"chars", static_cast<double>(res.best.chars.size())},
               {"beam_score", res.best.score},
               {"empty", res.empty ? 1.0 : 0.0}};
  record_input(m, opt.volumes);
  record_input(m, opt.encoder);
  record_input(m, opt.rate);
  record_input(m, opt.lm);
  record_input(m, opt.embeddings);
  record_output(m, tsv_path);

  if (res.empty) {
    std::printf("rate model predicted zero characters everywhere\n");
  } else if (!opt.vocab.empty()) {
    const std::vector<std::string> chars = read_vocab(opt.vocab);
    const std::string text = render_text(res.best.chars, chars) + "\n";
    const std::string txt_path = (fs::path(opt.out) / "decoded.txt").string();
    write_file_atomic(txt_path, text.data(), text.size());
    record_input(m, opt.vocab);
    record_output(m, txt_path);
    std::printf("decoded %zu chars: %s", res.best.chars.size(), text.c_str());
  } else {
    std::printf("decoded %zu chars\n", res.best.chars.size());
  }
  write_manifest((fs::path(opt.out) / "manifest.json").string(), m);
}

// ---- eval ----

struct EvalOpts {
  std::string cand;
  std::string ref;
  std::string embeddings;
  std::string metric = "seq-cosine";
  std::string config;
  std::vector<std::string> idf_text;
  std::string vocab;
  std::string out;
  double duration = 0.0;
};

void run_eval(const EvalOpts& opt) {
  const RunConfig cfg = config_or_default(opt.config);
  const Transcript cand = read_transcript(opt.cand);
  const Transcript ref = read_transcript(opt.ref);
  const EmbeddingTable table = read_embeddings(opt.embeddings);
  if (opt.duration <= 0.0) throw ConfigError("--duration must be positive");

  IdfTable idf;
  if (!opt.idf_text.empty()) {
    if (opt.vocab.empty()) throw ConfigError("--idf-text needs --vocab to map characters");
    const std::vector<std::string> chars = read_vocab(opt.vocab);
    std::vector<std::vector<int>> docs;
    std::int64_t skipped = 0;
    for (const std::string& path : opt.idf_text) {
      docs.push_back(ids_from_text(read_text_file(path), chars, &skipped));
    }
    idf = IdfTable::from_documents(docs, table.vocab);
  }

  SequenceMetric metric;
  if (opt.metric == "bleu1") {
    metric = [](const std::vector<int>& c, const std::vector<int>& r) { return bleu1(c, r); };
  } else if (opt.metric == "meteor") {
    metric = [](const std::vector<int>& c, const std::vector<int>& r) { return meteor(c, r); };
  } else if (opt.metric == "embed-recall") {
    metric = [&](const std::vector<int>& c, const std::vector<int>& r) {
      return embed_recall(c, r, table, idf);
    };
  } else if (opt.metric == "seq-cosine") {
    metric = [&](const std::vector<int>& c, const std::vector<int>& r) {
      return seq_cosine(c, r, table, idf);
    };
  } else {
    throw ConfigError("unknown metric '" + opt.metric + "'");
  }

  const WindowSpec spec{cfg.window, cfg.stride};
  const WindowedResult res = windowed_score(cand, ref, metric, spec, opt.duration);
  for (const WindowScore& w : res.windows) {
    std::printf("window %8.2fs  %.6f\n", w.center_s, w.score);
  }
  std::printf("mean %s over %zu windows (%d skipped): %.6f\n", opt.metric.c_str(),
              res.windows.size(), res.skipped, res.mean);

  Manifest m;
  m.command = "eval";
  m.config = cfg;
  m.params = {{"duration", opt.duration}};
  m.metrics = {{"mean", res.mean},
               {"windows", static_cast<double>(res.windows.size())},
               {"skipped", static_cast<double>(res.skipped)}};
  record_input(m, opt.cand);
  record_input(m, opt.ref);
  record_input(m, opt.embeddings);

  if (!opt.out.empty()) {
    std::string report;
    char line[64];
    for (const WindowScore& w : res.windows) {
      std::snprintf(line, sizeof line, "%.17g\t%.17g\n", w.center_s, w.score);
      report += line;
    }
    write_file_atomic(opt.out, report.data(), report.size());
    record_output(m, opt.out);
    write_manifest(opt.out + ".manifest.json", m);
  }
}

// ---- nulls ----

struct NullsOpts {
  std::string lm;
  std::string volumes;
  std::string rate;
  std::string out;
  std::string config;
  std::uint64_t seed = 0;
};

void run_nulls(const NullsOpts& opt) {
  const RunConfig cfg = config_or_default(opt.config);
  const NgramModel lm = load_lm(opt.lm);
  const VolumeSeries volumes = read_bvol(opt.volumes);
  const RateModel rate = load_rate_model(opt.rate);
  const std::vector<int> counts = predict_counts(volumes, rate);

  NullConfig nc;
  nc.reps = cfg.nulls;
  nc.beam = 10;
  nc.rho = cfg.rho;
  nc.eta = cfg.eta;
  nc.seed = opt.seed;
  const std::vector<std::vector<int>> seqs = generate_nulls(lm, counts, nc);

  std::string text;
  for (const std::vector<int>& seq : seqs) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i > 0) text += ' ';
      text += std::to_string(seq[i]);
    }
    text += '\n';
  }
  write_file_atomic(opt.out, text.data(), text.size());

  std::int64_t total = 0;
  for (int c : counts) total += c;
  Manifest m;
  m.command = "nulls";
  m.config = cfg;
  m.seeds = {{"nulls", opt.seed}};
  m.metrics = {{"reps", static_cast<double>(seqs.size())},
               {"chars", static_cast<double>(total)}};
  record_input(m, opt.lm);
  record_input(m, opt.volumes);
  record_input(m, opt.rate);
  record_output(m, opt.out);
  write_manifest(opt.out + ".manifest.json", m);

  std::printf("wrote %zu null sequences of %lld chars each\n", seqs.size(),
              static_cast<long long>(total));
}

// ---- attribute ----

struct AttributeOpts {
  std::string volumes;
  std::string transcript;
  std::string embeddings;
  std::string encoder;
  std::string atlas;
  std::string out;
  std::string config;
  int top = 10;
};

void run_attribute(const AttributeOpts& opt) {
  const RunConfig cfg = config_or_default(opt.config);
  const VolumeSeries volumes = read_bvol(opt.volumes);
  const Transcript transcript = read_transcript(opt.transcript);
  const EmbeddingTable table = read_embeddings(opt.embeddings);
  const EncoderParams params = load_encoder(opt.encoder);
  const AtlasVolume atlas = read_atlas(opt.atlas);

  StimulusConfig scfg;
  scfg.delay_weights = cfg.weights;
  SessionDataset ds = make_dataset(volumes, transcript, table, scfg);
  const Tensor saliency = voxel_saliency(params, ds.view);
  const RegionScores scores = region_aggregate(saliency, atlas);
  const std::vector<RankedRegion> ranked = top_regions(scores, opt.top);

  fs::create_directories(opt.out);
  std::string report;
  char line[96];
  for (const RankedRegion& r : ranked) {
    std::snprintf(line, sizeof line, "%d\t%.17g\t%.17g\n", r.label, r.score, r.relative);
    report += line;
    std::printf("region %3d  score %12.6f  relative %8.4f\n", r.label, r.score, r.relative);
  }
  const std::string regions_path = (fs::path(opt.out) / "regions.tsv").string();
  write_file_atomic(regions_path, report.data(), report.size());

  VolumeSeries sal_vol;
  sal_vol.x = volumes.x, sal_vol.y = volumes.y, sal_vol.z = volumes.z;
  sal_vol.t = 1;
  sal_vol.tr_s = volumes.tr_s;
  sal_vol.data.assign(saliency.data(), saliency.data() + saliency.size());
  const std::string sal_path = (fs::path(opt.out) / "saliency.bvol").string();
  write_bvol(sal_path, sal_vol);

  Manifest m;
  m.command = "attribute";
  m.config = cfg;
  if (!ranked.empty()) {
    m.metrics = {{"top1_label", static_cast<double>(ranked[0].label)},
                 {"top1_relative", ranked[0].relative}};
  }
  record_input(m, opt.volumes);
  record_input(m, opt.transcript);
  record_input(m, opt.embeddings);
  record_input(m, opt.encoder);
  record_input(m, opt.atlas);
  record_output(m, regions_path);
  record_output(m, sal_path);
  write_manifest((fs::path(opt.out) / "manifest.json").string(), m);
}

// ---- gradcheck ----

struct GradcheckOpts {
  int edge = 12;
  int latent = 4;
  std::vector<int> kernels{3, 3, 1};
  std::vector<int> filters{2, 3, 4};
  std::uint64_t seed = 0;
  double tol = 1e-4;
};

void run_gradcheck(const GradcheckOpts& opt) {
  if (opt.kernels.size() != 3 || opt.filters.size() != 3) {
    throw ConfigError("--kernels and --filters need exactly three values");
  }
  EncoderConfig cfg;
  cfg.input_dims = {opt.edge, opt.edge, opt.edge};
  cfg.kernel_edges = {opt.kernels[0], opt.kernels[1], opt.kernels[2]};
  cfg.filters = {opt.filters[0], opt.filters[1], opt.filters[2]};
  cfg.latent_dim = opt.latent;

  EncoderParams params = EncoderParams::init(cfg, mix_seed(opt.seed, 1));
  Tensor volume({cfg.input_dims[0], cfg.input_dims[1], cfg.input_dims[2]});
  Rng rng(mix_seed(opt.seed, 2));
  for (std::int64_t i = 0; i < volume.size(); ++i) volume[i] = rng.normal();
  std::vector<double> eps(static_cast<std::size_t>(cfg.latent_dim));
  std::vector<double> target(static_cast<std::size_t>(cfg.latent_dim));
  for (int i = 0; i < cfg.latent_dim; ++i) {
    eps[static_cast<std::size_t>(i)] = rng.normal();
    target[static_cast<std::size_t>(i)] = rng.uniform(-1.0, 1.0);
  }

  // loss through the reparametrized sample with the noise draw frozen
  auto sample_loss = [&](VibLossResult* out, ForwardCache* cache) {
    EncodeResult res = encode(volume, params, EncodeMode::kMean, nullptr, cache);
    std::vector<double> z(static_cast<std::size_t>(cfg.latent_dim));
    for (int i = 0; i < cfg.latent_dim; ++i) {
      const std::size_t d = static_cast<std::size_t>(i);
      z[d] = res.dist.mu[d] + std::exp(0.5 * res.dist.logvar[d]) * eps[d];
    }
    VibLossResult r = vib_loss(res.dist, z, target.data(), cfg.latent_dim, 1.0, 0.01);
    if (out) *out = r;
    return r.total;
  };

  ForwardCache cache;
  VibLossResult at_point;
  sample_loss(&at_point, &cache);
  EncoderParams grads = EncoderParams::zeros(cfg);
  encode_backward(params, cache, at_point.d_mu, at_point.d_logvar, grads);

  const std::vector<Tensor*> p = params.tensors();
  const std::vector<Tensor*> gl = grads.tensors();
  const std::vector<const Tensor*> g(gl.begin(), gl.end());
  std::int64_t coords = 0;
  for (const Tensor* t : p) coords += t->size();

  auto loss = [&]() { return sample_loss(nullptr, nullptr); };
  const double err = finite_diff_check(loss, p, g, 1e-5);
  std::printf("max relative gradient error %.3e over %lld coordinates\n", err,
              static_cast<long long>(coords));
  if (!(err < opt.tol)) {
    throw NumericError("gradient check failed: " + std::to_string(err) + " exceeds tolerance");
  }
}

// ---- protocol ----

struct ProtocolOpts {
  std::string kind = "within";
  std::string preset = "default";
  std::string out;
  std::uint64_t seed = 0;
  int runs = 1;
  int subjects = 3;
  // preset overrides; negative values keep the preset's choice
  double lr = -1.0;
  int epochs = -1;
  int batch = -1;
  double beta = -1.0;
  double sigma = -1.0;
  int train_acq = -1;
  int test_acq = -1;
  int beam = -1;
  int expansions = -1;
  double skew = -1.0;
};

void run_protocol(const ProtocolOpts& opt) {
  BenchmarkConfig bc;
  if (opt.preset == "default") {
    bc = default_benchmark();
  } else if (opt.preset == "small") {
    bc = small_benchmark();
  } else {
    throw ConfigError("unknown preset '" + opt.preset + "'");
  }
  if (opt.kind != "within" && opt.kind != "cross") {
    throw ConfigError("unknown protocol kind '" + opt.kind + "'");
  }
  if (opt.lr > 0.0) bc.train.lr = opt.lr;
  if (opt.epochs >= 0) bc.train.epochs = opt.epochs;
  if (opt.batch > 0) bc.train.batch_size = opt.batch;
  if (opt.beta >= 0.0) bc.train.beta = opt.beta;
  if (opt.sigma >= 0.0) bc.sigma = opt.sigma;
  if (opt.train_acq > 0) bc.train_acquisitions = opt.train_acq;
  if (opt.test_acq > 0) bc.test_acquisitions = opt.test_acq;
  if (opt.beam > 0) bc.decode.beam = opt.beam;
  if (opt.expansions > 0) bc.decode.expansions = opt.expansions;
  if (opt.skew >= 0.0) bc.chain_skew = opt.skew;
  bc.seed = mix_seed(opt.seed, 1);
  const World world = make_world(bc);

  double score_sum = 0.0;
  double worst_p = 0.0;
  int significant = 0;
  Manifest m;
  m.command = "protocol " + opt.kind;
  m.seeds["base"] = opt.seed;
  for (int r = 0; r < opt.runs; ++r) {
    const std::uint64_t run_seed = mix_seed(opt.seed, 100, static_cast<std::uint64_t>(r));
    const RunOutcome out = opt.kind == "within" ? run_within(world, run_seed)
                                                : run_cross(world, opt.subjects, run_seed);
    std::printf(
        "run %d: score %.4f  null %.4f  p %.4f  rate_r %.3f  align %.4f  cos %.4f  kl %.4f  "
        "chars %zu/%zu paced %d%s\n",
        r, out.decode_score, out.null_mean, out.p, out.rate_test_r, out.final_align,
        out.test_cos, out.final_kl, out.decoded.size(), out.truth.size(), out.pred_chars,
        out.decode_empty ? "  [empty]" : "");
    if (bc.vocab <= static_cast<int>(kAlphabet.size())) {
      const std::vector<std::string> glyphs = render_vocab(bc.vocab);
      const auto clip = [&](const std::vector<int>& ids) {
        std::vector<int> head(ids.begin(),
                              ids.begin() + std::min<std::size_t>(ids.size(), 48));
        return render_text(head, glyphs);
      };
      std::printf("   true: %s\n   dec:  %s\n", clip(out.truth).c_str(),
                  clip(out.decoded).c_str());
    }
    score_sum += out.decode_score;
    worst_p = std::max(worst_p, out.p);
    if (out.p <= 0.05) ++significant;
    const std::string tag = std::to_string(r);
    m.seeds["run_" + tag] = run_seed;
    m.metrics["score_" + tag] = out.decode_score;
    m.metrics["p_" + tag] = out.p;
  }
  m.metrics["mean_score"] = score_sum / opt.runs;
  m.metrics["worst_p"] = worst_p;
  m.metrics["significant"] = significant;
  m.params = {{"runs", static_cast<double>(opt.runs)},
              {"subjects", static_cast<double>(opt.subjects)},
              {"preset", opt.preset == "default" ? 0.0 : 1.0}};
  std::printf("mean score %.4f, %d/%d runs significant at 0.05\n", score_sum / opt.runs,
              significant, opt.runs);
  if (!opt.out.empty()) write_manifest(opt.out, m);
}

// ---- roundtrip ----

struct RoundtripOpts {
  std::string dir;
  int instances = 100;
  std::uint64_t seed = 0;
};

double f32_exact(double v) { return static_cast<double>(static_cast<float>(v)); }

void run_roundtrip(const RoundtripOpts& opt) {
  fs::create_directories(opt.dir);
  const fs::path dir(opt.dir);
  int checked = 0;
  for (int k = 0; k < opt.instances; ++k) {
    Rng rng(mix_seed(opt.seed, static_cast<std::uint64_t>(k)));
    const auto dim = [&](int lo, int hi) {
      return lo + static_cast<int>(rng.uniform_int(hi - lo + 1));
    };

    VolumeSeries v;
    v.x = dim(1, 5), v.y = dim(1, 5), v.z = dim(1, 5), v.t = dim(1, 4);
    v.tr_s = 0.5 + rng.uniform(0.0, 3.0);
    v.data.resize(static_cast<std::size_t>(v.t) * v.voxels());
    for (double& d : v.data) d = f32_exact(rng.normal());
    const std::string v1 = (dir / "a.bvol").string(), v2 = (dir / "b.bvol").string();
    write_bvol(v1, v);
    write_bvol(v2, read_bvol(v1));
    if (file_digest(v1) != file_digest(v2)) throw DataError("bvol roundtrip mismatch");

    AtlasVolume a;
    a.x = dim(1, 5), a.y = dim(1, 5), a.z = dim(1, 5);
    a.regions = dim(1, std::min<int>(4, static_cast<int>(a.voxels())));
    a.labels.resize(static_cast<std::size_t>(a.voxels()));
    // every region needs at least one voxel; the rest may be background 0
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
      a.labels[i] = i < static_cast<std::size_t>(a.regions)
                        ? static_cast<int>(i) + 1
                        : static_cast<int>(rng.uniform_int(a.regions + 1));
    }
    const std::string a1 = (dir / "a.atls").string(), a2 = (dir / "b.atls").string();
    write_atlas(a1, a);
    write_atlas(a2, read_atlas(a1));
    if (file_digest(a1) != file_digest(a2)) throw DataError("atlas roundtrip mismatch");

    EmbeddingTable t;
    t.vocab = dim(1, 6), t.dim = dim(1, 6);
    t.rows.resize(static_cast<std::size_t>(t.vocab) * t.dim);
    for (double& d : t.rows) d = f32_exact(rng.normal());
    const std::string t1 = (dir / "a.embt").string(), t2 = (dir / "b.embt").string();
    write_embeddings(t1, t);
    write_embeddings(t2, read_embeddings(t1));
    if (file_digest(t1) != file_digest(t2)) throw DataError("embeddings roundtrip mismatch");

    Tensor c1t({dim(1, 3), dim(1, 3)});
    for (std::int64_t i = 0; i < c1t.size(); ++i) c1t[i] = rng.normal();
    Tensor c2t({dim(1, 4)});
    for (std::int64_t i = 0; i < c2t.size(); ++i) c2t[i] = rng.normal();
    const std::string c1 = (dir / "a.ckpt").string(), c2 = (dir / "b.ckpt").string();
    write_checkpoint(c1, {{"alpha", &c1t}, {"beta", &c2t}});
    const std::map<std::string, Tensor> back = read_checkpoint(c1);
    write_checkpoint(c2, {{"alpha", &back.at("alpha")}, {"beta", &back.at("beta")}});
    if (file_digest(c1) != file_digest(c2)) throw DataError("checkpoint roundtrip mismatch");

    ++checked;
  }
  std::printf("%d randomized instances of 4 containers reproduced byte-identically\n", checked);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic character decoding workbench"};
  app.require_subcommand(1);

  auto synth = std::make_shared<SynthOpts>();
  CLI::App* s = app.add_subcommand("synth", "generate a synthetic recording session");
  s->add_option("--out", synth->out, "output directory")->required();
  s->add_option("--from-manifest", synth->from_manifest,
                "regenerate from a manifest and verify digests");
  s->add_option("--seed", synth->seed, "world seed");
  s->add_option("--subject-seed", synth->subject_seed, "subject seed (0 derives from --seed)");
  s->add_option("--stimulus-seed", synth->stimulus_seed,
                "stimulus seed (0 derives from --seed)");
  s->add_option("--session", synth->session, "session index (changes the noise draw)");
  s->add_option("--vocab", synth->vocab, "vocabulary size");
  s->add_option("--dim", synth->dim, "embedding dim");
  s->add_option("--edge", synth->edge, "cubic volume edge length");
  s->add_option("--regions", synth->regions, "atlas region count");
  s->add_option("--signal-region", synth->signal_regions, "regions carrying signal");
  s->add_option("--acquisitions", synth->acquisitions, "series length");
  s->add_option("--segment", synth->segment, "acquisitions per constant-rate segment");
  s->add_option("--max-rate", synth->max_rate, "max chars per acquisition");
  s->add_option("--skew", synth->skew, "chain transition skew");
  s->add_option("--sigma", synth->sigma, "noise standard deviation");
  s->add_option("--eps", synth->eps, "subject mixing perturbation");
  s->add_option("--gain", synth->gain, "signal gain");
  s->add_option("--tr", synth->tr, "repetition time in seconds");
  s->callback([synth] { run_synth(*synth); });

  auto tlm = std::make_shared<TrainLmOpts>();
  CLI::App* l = app.add_subcommand("train-lm", "fit the character model on text files");
  l->add_option("--text", tlm->text, "training text files, one document each")->required();
  l->add_option("--vocab", tlm->vocab, "vocab tsv")->required();
  l->add_option("--out", tlm->out, "output checkpoint")->required();
  l->add_option("--order", tlm->order, "model order");
  l->add_option("--discount", tlm->discount, "absolute discount");
  l->add_option("--cap", tlm->cap, "context length cap");
  l->callback([tlm] { run_train_lm(*tlm); });

  auto ten = std::make_shared<TrainEncoderOpts>();
  CLI::App* e = app.add_subcommand("train-encoder", "fit the volume encoder");
  e->add_option("--volumes", ten->volumes, "bvol series")->required();
  e->add_option("--embeddings", ten->embeddings, "embt table")->required();
  e->add_option("--transcript", ten->transcript, "stimulus transcript tsv")->required();
  e->add_option("--out", ten->out, "output checkpoint")->required();
  e->add_option("--config", ten->config, "run config file");
  e->add_option("--kernels", ten->kernels, "three odd conv kernel edges")->delimiter(',');
  e->add_option("--filters", ten->filters, "three conv filter counts")->delimiter(',');
  e->add_option("--latent", ten->latent, "latent dim (0 follows the embeddings)");
  e->add_option("--seed", ten->seed, "init/train seed");
  e->callback([ten] { run_train_encoder(*ten); });

  auto trt = std::make_shared<TrainRateOpts>();
  CLI::App* r = app.add_subcommand("train-rate", "fit the character-rate readout");
  r->add_option("--volumes", trt->volumes, "bvol series")->required();
  r->add_option("--transcript", trt->transcript, "stimulus transcript tsv")->required();
  r->add_option("--out", trt->out, "output checkpoint")->required();
  r->add_option("--config", trt->config, "run config file");
  r->callback([trt] { run_train_rate(*trt); });

  auto dec = std::make_shared<DecodeOpts>();
  CLI::App* d = app.add_subcommand("decode", "decode characters from a recorded series");
  d->add_option("--volumes", dec->volumes, "bvol series")->required();
  d->add_option("--encoder", dec->encoder, "encoder checkpoint")->required();
  d->add_option("--rate", dec->rate, "rate model checkpoint")->required();
  d->add_option("--lm", dec->lm, "character model checkpoint")->required();
  d->add_option("--embeddings", dec->embeddings, "embt table")->required();
  d->add_option("--vocab", dec->vocab, "vocab tsv for rendering text");
  d->add_option("--out", dec->out, "output directory")->required();
  d->add_option("--config", dec->config, "run config file");
  d->add_option("--seed", dec->seed, "beam sampling seed");
  d->add_option("--expansions", dec->expansions, "sampled continuations per candidate");
  d->callback([dec] { run_decode(*dec); });

  auto ev = std::make_shared<EvalOpts>();
  CLI::App* v = app.add_subcommand("eval", "score a decoded transcript against a reference");
  v->add_option("--cand", ev->cand, "candidate transcript tsv")->required();
  v->add_option("--ref", ev->ref, "reference transcript tsv")->required();
  v->add_option("--embeddings", ev->embeddings, "embt table")->required();
  v->add_option("--metric", ev->metric, "bleu1|meteor|embed-recall|seq-cosine");
  v->add_option("--config", ev->config, "run config file");
  v->add_option("--idf-text", ev->idf_text, "corpus files for idf weights");
  v->add_option("--vocab", ev->vocab, "vocab tsv (needed with --idf-text)");
  v->add_option("--out", ev->out, "per-window report tsv");
  v->add_option("--duration", ev->duration, "stimulus duration in seconds")->required();
  v->callback([ev] { run_eval(*ev); });

  auto nl = std::make_shared<NullsOpts>();
  CLI::App* n = app.add_subcommand("nulls", "generate brain-blind null sequences");
  n->add_option("--lm", nl->lm, "character model checkpoint")->required();
  n->add_option("--volumes", nl->volumes, "bvol series")->required();
  n->add_option("--rate", nl->rate, "rate model checkpoint")->required();
  n->add_option("--out", nl->out, "output tsv of id sequences")->required();
  n->add_option("--config", nl->config, "run config file");
  n->add_option("--seed", nl->seed, "null sampling seed");
  n->callback([nl] { run_nulls(*nl); });

  auto at = std::make_shared<AttributeOpts>();
  CLI::App* a = app.add_subcommand("attribute", "rank atlas regions by encoder saliency");
  a->add_option("--volumes", at->volumes, "bvol series")->required();
  a->add_option("--transcript", at->transcript, "stimulus transcript tsv")->required();
  a->add_option("--embeddings", at->embeddings, "embt table")->required();
  a->add_option("--encoder", at->encoder, "encoder checkpoint")->required();
  a->add_option("--atlas", at->atlas, "atlas labels")->required();
  a->add_option("--out", at->out, "output directory")->required();
  a->add_option("--config", at->config, "run config file");
  a->add_option("--top", at->top, "regions to report");
  a->callback([at] { run_attribute(*at); });

  auto gc = std::make_shared<GradcheckOpts>();
  CLI::App* g = app.add_subcommand("gradcheck", "finite-difference check of encoder gradients");
  g->add_option("--edge", gc->edge, "cubic input edge");
  g->add_option("--latent", gc->latent, "latent dim");
  g->add_option("--kernels", gc->kernels, "three odd conv kernel edges")->delimiter(',');
  g->add_option("--filters", gc->filters, "three conv filter counts")->delimiter(',');
  g->add_option("--seed", gc->seed, "parameter/input seed");
  g->add_option("--tol", gc->tol, "max relative error accepted");
  g->callback([gc] { run_gradcheck(*gc); });

  auto pr = std::make_shared<ProtocolOpts>();
  CLI::App* p = app.add_subcommand("protocol", "end-to-end synthetic decoding protocol");
  p->add_option("--kind", pr->kind, "within|cross");
  p->add_option("--preset", pr->preset, "default|small");
  p->add_option("--seed", pr->seed, "base seed");
  p->add_option("--runs", pr->runs, "independent runs");
  p->add_option("--subjects", pr->subjects, "training subjects (cross only)");
  p->add_option("--out", pr->out, "manifest output path");
  p->add_option("--lr", pr->lr, "override preset learning rate");
  p->add_option("--epochs", pr->epochs, "override preset epochs");
  p->add_option("--batch", pr->batch, "override preset batch size");
  p->add_option("--beta", pr->beta, "override bottleneck weight");
  p->add_option("--sigma", pr->sigma, "override noise level");
  p->add_option("--train-acq", pr->train_acq, "override training acquisitions");
  p->add_option("--test-acq", pr->test_acq, "override test acquisitions");
  p->add_option("--skew", pr->skew, "override transition skew of the source chain");
  p->add_option("--beam", pr->beam, "override beam width");
  p->add_option("--expansions", pr->expansions, "override beam expansions");
  p->callback([pr] { run_protocol(*pr); });

  auto rt = std::make_shared<RoundtripOpts>();
  CLI::App* q = app.add_subcommand("roundtrip", "self-check container byte stability");
  q->add_option("--dir", rt->dir, "scratch directory")->required();
  q->add_option("--instances", rt->instances, "randomized instances");
  q->add_option("--seed", rt->seed, "randomization seed");
  q->callback([rt] { run_roundtrip(*rt); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const ShapeError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const DataError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const NumericError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 3;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
