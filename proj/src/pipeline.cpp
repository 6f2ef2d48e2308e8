#include "chardec/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "chardec/error.hpp"
#include "chardec/io.hpp"
#include "chardec/stats.hpp"
#include "json.hpp"

namespace chardec {

namespace {

Tensor meta_tensor(const std::vector<double>& values) {
  Tensor t({static_cast<int>(values.size())});
  std::copy(values.begin(), values.end(), t.data());
  return t;
}

const Tensor& require(const std::map<std::string, Tensor>& tensors, const std::string& name,
                      const std::string& path) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw DataError(path + ": checkpoint is missing tensor " + name);
  return it->second;
}

int meta_int(const Tensor& meta, int i) { return static_cast<int>(meta[i]); }

}  // namespace

void save_encoder(const std::string& path, const EncoderParams& params) {
  const EncoderConfig& c = params.config;
  Tensor meta = meta_tensor({static_cast<double>(c.input_dims[0]),
                             static_cast<double>(c.input_dims[1]),
                             static_cast<double>(c.input_dims[2]),
                             static_cast<double>(c.kernel_edges[0]),
                             static_cast<double>(c.kernel_edges[1]),
                             static_cast<double>(c.kernel_edges[2]),
                             static_cast<double>(c.filters[0]),
                             static_cast<double>(c.filters[1]),
                             static_cast<double>(c.filters[2]),
                             static_cast<double>(c.latent_dim), c.logvar_min, c.logvar_max});
  write_checkpoint(path, {{"encoder.meta", &meta},
                          {"encoder.conv1", &params.conv1},
                          {"encoder.conv2", &params.conv2},
                          {"encoder.conv3", &params.conv3},
                          {"encoder.w_mu", &params.w_mu},
                          {"encoder.b_mu", &params.b_mu},
                          {"encoder.w_logvar", &params.w_logvar},
                          {"encoder.b_logvar", &params.b_logvar}});
}

EncoderParams load_encoder(const std::string& path) {
  std::map<std::string, Tensor> t = read_checkpoint(path);
  const Tensor& meta = require(t, "encoder.meta", path);
  if (meta.size() != 12) throw DataError(path + ": malformed encoder metadata");
  EncoderConfig cfg;
  cfg.input_dims = {meta_int(meta, 0), meta_int(meta, 1), meta_int(meta, 2)};
  cfg.kernel_edges = {meta_int(meta, 3), meta_int(meta, 4), meta_int(meta, 5)};
  cfg.filters = {meta_int(meta, 6), meta_int(meta, 7), meta_int(meta, 8)};
  cfg.latent_dim = meta_int(meta, 9);
  cfg.logvar_min = meta[10];
  cfg.logvar_max = meta[11];
  cfg.validate();

  EncoderParams params = EncoderParams::zeros(cfg);
  const std::vector<std::pair<std::string, Tensor*>> slots = {
      {"encoder.conv1", &params.conv1},     {"encoder.conv2", &params.conv2},
      {"encoder.conv3", &params.conv3},     {"encoder.w_mu", &params.w_mu},
      {"encoder.b_mu", &params.b_mu},       {"encoder.w_logvar", &params.w_logvar},
      {"encoder.b_logvar", &params.b_logvar}};
  for (const auto& [name, slot] : slots) {
    const Tensor& stored = require(t, name, path);
    if (stored.dims() != slot->dims()) {
      throw ShapeError(path + ": tensor " + name + " does not match the stored config");
    }
    *slot = stored;
  }
  return params;
}

void save_rate_model(const std::string& path, const RateModel& model) {
  Tensor weights({static_cast<int>(model.weights.size())});
  std::copy(model.weights.begin(), model.weights.end(), weights.data());
  Tensor meta = meta_tensor(
      {model.intercept, model.lambda, static_cast<double>(model.delays), model.cv_r});
  std::vector<std::pair<std::string, const Tensor*>> tensors = {{"rate.meta", &meta},
                                                                {"rate.weights", &weights}};
  Tensor mask;
  if (!model.voxel_mask.empty()) {
    mask = Tensor({static_cast<int>(model.voxel_mask.size())});
    for (std::size_t i = 0; i < model.voxel_mask.size(); ++i) {
      mask[static_cast<std::int64_t>(i)] = static_cast<double>(model.voxel_mask[i]);
    }
    tensors.push_back({"rate.mask", &mask});
  }
  write_checkpoint(path, tensors);
}

RateModel load_rate_model(const std::string& path) {
  std::map<std::string, Tensor> t = read_checkpoint(path);
  const Tensor& meta = require(t, "rate.meta", path);
  if (meta.size() != 4) throw DataError(path + ": malformed rate-model metadata");
  RateModel model;
  model.intercept = meta[0];
  model.lambda = meta[1];
  model.delays = meta_int(meta, 2);
  model.cv_r = meta[3];
  const Tensor& weights = require(t, "rate.weights", path);
  model.weights.assign(weights.data(), weights.data() + weights.size());
  auto mask = t.find("rate.mask");
  if (mask != t.end()) {
    model.voxel_mask.resize(static_cast<std::size_t>(mask->second.size()));
    for (std::int64_t i = 0; i < mask->second.size(); ++i) {
      model.voxel_mask[static_cast<std::size_t>(i)] =
          static_cast<std::int64_t>(mask->second[i]);
    }
  }
  return model;
}

void save_lm(const std::string& path, const NgramModel& lm) {
  std::vector<Tensor> levels;
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  Tensor meta = meta_tensor({static_cast<double>(lm.order()), static_cast<double>(lm.vocab()),
                             lm.discount(), static_cast<double>(lm.context_cap())});
  Tensor chars({lm.vocab()});
  for (int c = 0; c < lm.vocab(); ++c) chars[c] = static_cast<double>(lm.char_counts()[c]);

  levels.reserve(lm.tables().size());
  std::vector<std::string> names;
  names.reserve(lm.tables().size());
  for (std::size_t level = 0; level < lm.tables().size(); ++level) {
    const NgramModel::Table& table = lm.tables()[level];
    std::int64_t rows = 0;
    for (const auto& [ctx, cc] : table) rows += static_cast<std::int64_t>(cc.counts.size());
    if (rows == 0) continue;  // empty levels are recreated on load
    Tensor flat({static_cast<int>(rows), static_cast<int>(level) + 2});
    std::int64_t r = 0;
    for (const auto& [ctx, cc] : table) {
      for (const auto& [c, n] : cc.counts) {
        double* row = flat.data() + r * flat.dim(1);
        for (std::size_t i = 0; i < ctx.size(); ++i) row[i] = static_cast<double>(ctx[i]);
        row[level] = static_cast<double>(c);
        row[level + 1] = static_cast<double>(n);
        ++r;
      }
    }
    levels.push_back(std::move(flat));
    names.push_back("lm.level" + std::to_string(level));
  }

  tensors.push_back({"lm.meta", &meta});
  tensors.push_back({"lm.char_counts", &chars});
  for (std::size_t i = 0; i < levels.size(); ++i) tensors.push_back({names[i], &levels[i]});
  write_checkpoint(path, tensors);
}

NgramModel load_lm(const std::string& path) {
  std::map<std::string, Tensor> t = read_checkpoint(path);
  const Tensor& meta = require(t, "lm.meta", path);
  if (meta.size() != 4) throw DataError(path + ": malformed lm metadata");
  NgramConfig cfg;
  cfg.order = meta_int(meta, 0);
  const int vocab = meta_int(meta, 1);
  cfg.discount = meta[2];
  cfg.context_cap = meta_int(meta, 3);

  const Tensor& chars = require(t, "lm.char_counts", path);
  std::vector<std::int64_t> char_counts(static_cast<std::size_t>(chars.size()));
  for (std::int64_t i = 0; i < chars.size(); ++i) {
    char_counts[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(chars[i]);
  }

  const int n_levels = std::min(cfg.order - 1, cfg.context_cap) + 1;
  std::vector<NgramModel::Table> tables(static_cast<std::size_t>(n_levels));
  for (int level = 0; level < n_levels; ++level) {
    auto it = t.find("lm.level" + std::to_string(level));
    if (it == t.end()) continue;
    const Tensor& flat = it->second;
    if (flat.rank() != 2 || flat.dim(1) != level + 2) {
      throw DataError(path + ": malformed lm level " + std::to_string(level));
    }
    NgramModel::Table& table = tables[static_cast<std::size_t>(level)];
    for (int r = 0; r < flat.dim(0); ++r) {
      const double* row = flat.data() + static_cast<std::int64_t>(r) * flat.dim(1);
      std::vector<int> ctx(static_cast<std::size_t>(level));
      for (int i = 0; i < level; ++i) ctx[static_cast<std::size_t>(i)] = static_cast<int>(row[i]);
      NgramModel::CtxCounts& cc = table[ctx];
      const std::int64_t n = static_cast<std::int64_t>(row[level + 1]);
      cc.counts[static_cast<int>(row[level])] = n;
      cc.total += n;
    }
  }
  return NgramModel::from_tables(std::move(tables), vocab, std::move(char_counts), cfg);
}

Tensor encode_series(const EncoderParams& params, const VolumeSeries& volumes) {
  volumes.validate();
  const auto& d = params.config.input_dims;
  if (volumes.x != d[0] || volumes.y != d[1] || volumes.z != d[2]) {
    throw ShapeError("encode_series: volume dims do not match the encoder input");
  }
  Tensor out({volumes.t, params.config.latent_dim});
  Tensor scratch({d[0], d[1], d[2]});
  for (int t = 0; t < volumes.t; ++t) {
    std::copy(volumes.volume(t), volumes.volume(t) + volumes.voxels(), scratch.data());
    EncodeResult res = encode(scratch, params, EncodeMode::kMean, nullptr);
    std::copy(res.z.begin(), res.z.end(),
              out.data() + static_cast<std::int64_t>(t) * params.config.latent_dim);
  }
  return out;
}

SessionDataset make_dataset(const VolumeSeries& volumes, const Transcript& transcript,
                            const EmbeddingTable& table, const StimulusConfig& scfg) {
  return make_dataset(volumes, build_targets(transcript, table, volumes.grid(), scfg));
}

SessionDataset make_dataset(const VolumeSeries& volumes, Tensor targets) {
  if (targets.rank() != 2 || targets.dim(0) != volumes.t) {
    throw ShapeError("make_dataset: targets do not cover the series");
  }
  SessionDataset ds;
  ds.targets = std::move(targets);
  ds.view.volume_dims = {volumes.x, volumes.y, volumes.z};
  ds.view.target_dim = ds.targets.dim(1);
  ds.view.samples.reserve(static_cast<std::size_t>(volumes.t));
  for (int t = 0; t < volumes.t; ++t) {
    ds.view.samples.push_back(
        {volumes.volume(t), ds.targets.data() + static_cast<std::int64_t>(t) * ds.view.target_dim});
  }
  return ds;
}

EncoderConfig BenchmarkConfig::encoder_config() const {
  EncoderConfig cfg;
  cfg.input_dims = atlas_dims;
  cfg.kernel_edges = kernels;
  cfg.filters = filters;
  cfg.latent_dim = dim;
  return cfg;
}

BenchmarkConfig default_benchmark() {
  BenchmarkConfig cfg;
  cfg.train.epochs = 25;
  cfg.train.batch_size = 32;
  cfg.train.lr = 3e-3;
  cfg.decode.beam = 200;
  cfg.decode.expansions = 16;
  cfg.nulls.reps = 200;
  return cfg;
}

BenchmarkConfig small_benchmark() {
  BenchmarkConfig cfg = default_benchmark();
  cfg.atlas_dims = {12, 12, 12};
  cfg.train_acquisitions = 480;
  cfg.test_acquisitions = 120;
  cfg.filters = {6, 12, 24};
  cfg.train.epochs = 30;
  cfg.decode.beam = 64;
  return cfg;
}

World make_world(const BenchmarkConfig& cfg) {
  World w;
  w.cfg = cfg;
  w.atlas = make_slab_atlas(cfg.atlas_dims[0], cfg.atlas_dims[1], cfg.atlas_dims[2],
                            cfg.regions);
  w.table = random_embeddings(cfg.vocab, cfg.dim, mix_seed(cfg.seed, 1));
  w.chain = MarkovChain::random(cfg.vocab, cfg.chain_skew, mix_seed(cfg.seed, 2));
  w.corpus.reserve(static_cast<std::size_t>(cfg.lm_docs));
  for (int d = 0; d < cfg.lm_docs; ++d) {
    Rng rng(mix_seed(cfg.seed, 3, static_cast<std::uint64_t>(d)));
    w.corpus.push_back(w.chain.sample(cfg.lm_doc_len, rng));
  }
  NgramConfig lm_cfg;
  lm_cfg.order = cfg.lm_order;
  w.lm = NgramModel::train(w.corpus, cfg.vocab, lm_cfg);

  // idf needs window-sized documents, not whole corpora, to vary at all
  std::vector<std::vector<int>> chunks;
  for (const std::vector<int>& doc : w.corpus) {
    for (std::size_t at = 0; at < doc.size(); at += static_cast<std::size_t>(cfg.idf_chunk)) {
      const std::size_t end = std::min(doc.size(), at + static_cast<std::size_t>(cfg.idf_chunk));
      chunks.emplace_back(doc.begin() + static_cast<std::ptrdiff_t>(at),
                          doc.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  w.idf = IdfTable::from_documents(chunks, cfg.vocab);
  return w;
}

SessionData make_stimulus_session(const World& world, const SubjectSpec& subject,
                                  std::uint64_t stimulus_seed, int acquisitions,
                                  int session_index) {
  const AcquisitionGrid grid{world.cfg.tr_s, acquisitions};
  SessionData s;
  s.counts = bursty_counts(acquisitions, world.cfg.rate_segment, world.cfg.max_rate,
                           mix_seed(stimulus_seed, 1));
  s.transcript = make_transcript(s.counts, grid, world.chain, mix_seed(stimulus_seed, 2));
  s.session = simulate_session(s.transcript, world.table, grid, subject, session_index);
  return s;
}

namespace {

std::vector<int> transcript_chars(const Transcript& t) {
  std::vector<int> chars;
  chars.reserve(t.entries.size());
  for (const TranscriptEntry& e : t.entries) chars.push_back(e.char_id);
  return chars;
}

RateModel fit_rate(const DesignMatrix& design, const std::vector<int>& counts) {
  std::vector<double> rates(static_cast<std::size_t>(design.rows));
  for (int i = 0; i < design.rows; ++i) rates[static_cast<std::size_t>(i)] = counts[i];
  return ridge_fit(design, rates);
}

// encode, pace, decode, and test the held-out session against nulls
void evaluate_test_session(const World& world, const EncoderParams& params,
                           const RateModel& rate, const SessionData& test,
                           std::uint64_t run_seed, RunOutcome& out) {
  const BenchmarkConfig& cfg = world.cfg;
  Tensor z = encode_series(params, test.session.volumes);
  {
    std::vector<double> per_row;
    for (int t = 0; t < z.dim(0); ++t) {
      std::vector<double> zr(z.data() + static_cast<std::int64_t>(t) * z.dim(1),
                             z.data() + static_cast<std::int64_t>(t + 1) * z.dim(1));
      std::vector<double> yr(
          test.session.targets.data() + static_cast<std::int64_t>(t) * z.dim(1),
          test.session.targets.data() + static_cast<std::int64_t>(t + 1) * z.dim(1));
      bool zero = true;
      for (double v : yr) zero = zero && v == 0.0;
      if (!zero) per_row.push_back(cosine(zr, yr));
    }
    out.test_cos = per_row.empty() ? 0.0 : mean(per_row);
  }
  const std::vector<int> pred = predict_counts(test.session.volumes, rate);
  std::vector<double> pred_d(pred.begin(), pred.end());
  std::vector<double> true_d(test.counts.begin(), test.counts.end());
  out.rate_test_r = pearson(pred_d, true_d);
  for (int c : pred) out.pred_chars += c;

  DecodeConfig dc = cfg.decode;
  dc.seed = mix_seed(run_seed, 61);
  DecodeResult res = decode(z, pred, world.lm, world.table, test.session.volumes.grid(), dc);
  out.decoded = res.best.chars;
  out.truth = transcript_chars(test.transcript);
  out.decode_empty = res.empty;
  if (res.empty || out.truth.empty()) return;

  out.decode_score = seq_cosine(out.decoded, out.truth, world.table, world.idf);
  NullConfig nc = cfg.nulls;
  nc.seed = mix_seed(run_seed, 62);
  const std::vector<std::vector<int>> nulls = generate_nulls(world.lm, pred, nc);
  std::vector<double> null_scores;
  null_scores.reserve(nulls.size());
  for (const std::vector<int>& n : nulls) {
    null_scores.push_back(seq_cosine(n, out.truth, world.table, world.idf));
  }
  out.null_mean = mean(null_scores);
  out.p = p_value(out.decode_score, null_scores);
}

}  // namespace

RunOutcome run_within(const World& world, std::uint64_t run_seed) {
  const BenchmarkConfig& cfg = world.cfg;
  SubjectSpec subject = make_subject(mix_seed(run_seed, 51), world.atlas, cfg.signal_regions,
                                     cfg.sigma, cfg.eps, cfg.dim, cfg.gain);
  SessionData train = make_stimulus_session(world, subject, mix_seed(run_seed, 52),
                                            cfg.train_acquisitions, 0);
  SessionData test = make_stimulus_session(world, subject, mix_seed(run_seed, 53),
                                           cfg.test_acquisitions, 1);

  EncoderParams params = EncoderParams::init(cfg.encoder_config(), mix_seed(run_seed, 54));
  TrainConfig tc = cfg.train;
  tc.seed = mix_seed(run_seed, 55);
  SessionDataset ds = make_dataset(train.session.volumes, train.session.targets);
  TrainHistory history = train_encoder(params, ds.view, tc);

  RunOutcome out;
  if (!history.empty()) {
    out.final_kl = history.back().mean_kl;
    out.final_align = history.back().mean_align;
  }

  DesignMatrix design = assemble_design(train.session.volumes, 5);
  RateModel rate = fit_rate(design, train.counts);
  out.rate_cv_r = rate.cv_r;

  evaluate_test_session(world, params, rate, test, run_seed, out);
  return out;
}

RunOutcome run_cross(const World& world, int train_subjects, std::uint64_t run_seed) {
  if (train_subjects < 1) throw ConfigError("run_cross: need at least one training subject");
  const BenchmarkConfig& cfg = world.cfg;

  std::vector<SubjectSpec> subjects;
  subjects.reserve(static_cast<std::size_t>(train_subjects));
  for (int s = 0; s < train_subjects; ++s) {
    subjects.push_back(make_subject(mix_seed(run_seed, 71, static_cast<std::uint64_t>(s)),
                                    world.atlas, cfg.signal_regions, cfg.sigma, cfg.eps,
                                    cfg.dim, cfg.gain));
  }
  SubjectSpec held_out = make_subject(mix_seed(run_seed, 72), world.atlas, cfg.signal_regions,
                                      cfg.sigma, cfg.eps, cfg.dim, cfg.gain);

  // all training subjects experience the same stimulus
  const std::uint64_t stimulus_seed = mix_seed(run_seed, 73);
  std::vector<SessionData> sessions;
  sessions.reserve(subjects.size());
  for (const SubjectSpec& s : subjects) {
    sessions.push_back(
        make_stimulus_session(world, s, stimulus_seed, cfg.train_acquisitions, 0));
  }
  SessionData test =
      make_stimulus_session(world, held_out, mix_seed(run_seed, 74), cfg.test_acquisitions, 1);

  EncoderDataset pooled;
  pooled.volume_dims = cfg.atlas_dims;
  pooled.target_dim = cfg.dim;
  for (const SessionData& s : sessions) {
    for (int t = 0; t < s.session.volumes.t; ++t) {
      pooled.samples.push_back(
          {s.session.volumes.volume(t),
           s.session.targets.data() + static_cast<std::int64_t>(t) * cfg.dim});
    }
  }
  EncoderParams params = EncoderParams::init(cfg.encoder_config(), mix_seed(run_seed, 75));
  TrainConfig tc = cfg.train;
  tc.seed = mix_seed(run_seed, 76);
  TrainHistory history = train_encoder(params, pooled, tc);

  RunOutcome out;
  if (!history.empty()) {
    out.final_kl = history.back().mean_kl;
    out.final_align = history.back().mean_align;
  }

  DesignMatrix stacked;
  std::vector<int> stacked_counts;
  for (const SessionData& s : sessions) {
    DesignMatrix d = assemble_design(s.session.volumes, 5);
    if (stacked.cols == 0) stacked.cols = d.cols;
    stacked.rows += d.rows;
    stacked.data.insert(stacked.data.end(), d.data.begin(), d.data.end());
    stacked_counts.insert(stacked_counts.end(), s.counts.begin(), s.counts.begin() + d.rows);
  }
  RateModel rate = fit_rate(stacked, stacked_counts);
  out.rate_cv_r = rate.cv_r;

  evaluate_test_session(world, params, rate, test, run_seed, out);
  return out;
}

std::string Manifest::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  nlohmann::json jc;
  std::istringstream lines(serialize_run_config(config));
  std::string line;
  while (std::getline(lines, line)) {
    const std::size_t eq = line.find('=');
    jc[line.substr(0, eq)] = line.substr(eq + 1);
  }
  j["config"] = jc;
  j["seeds"] = seeds;
  j["params"] = params;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["metrics"] = metrics;
  return j.dump(2) + "\n";
}

Manifest Manifest::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  Manifest m;
  try {
    m.command = j.at("command").get<std::string>();
    std::ostringstream cfg_text;
    for (const auto& [key, value] : j.at("config").items()) {
      cfg_text << key << '=' << value.get<std::string>() << '\n';
    }
    m.config = parse_run_config(cfg_text.str());
    m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
    m.params = j.at("params").get<std::map<std::string, double>>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    m.metrics = j.at("metrics").get<std::map<std::string, double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  return m;
}

void write_manifest(const std::string& path, const Manifest& m) {
  const std::string text = m.to_json();
  write_file_atomic(path, text.data(), text.size());
}

Manifest read_manifest(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  return Manifest::from_json(std::string(bytes.begin(), bytes.end()));
}

}  // namespace chardec
