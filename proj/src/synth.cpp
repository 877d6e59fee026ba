#include "cbvr/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "cbvr/io.hpp"

namespace cbvr {

std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t index) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the tag
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  // splitmix64 finalizer
  std::uint64_t z = master + 0x9e3779b97f4a7c15ull * (index + 1) + h;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::map<std::string, std::string> parse_config_text(std::string_view text) {
  std::map<std::string, std::string> out;
  int lineno = 0;
  for (const auto& raw : io::split(text, '\n')) {
    ++lineno;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = io::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const auto key = std::string(io::trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    out[key] = std::string(io::trim(line.substr(eq + 1)));
  }
  return out;
}

namespace {

int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("config: " + key + " expects an unsigned integer, got '" + v + "'");
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, double>) out += fmt(v[i]);
    else out += std::to_string(v[i]);
  }
  return out;
}

std::string pad(int v, int width) {
  std::string s = std::to_string(v);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_events < 1) throw ConfigError("synth: n_events must be >= 1");
  if (n_exemplars < 1 || n_background < 1) throw ConfigError("synth: n_exemplars and n_background must be >= 1");
  if (test_positives < 1 || static_cast<long>(n_events) * test_positives > n_videos) {
    throw ConfigError("synth: n_events * test_positives exceeds n_videos");
  }
  if (feature_dim < 1) throw ConfigError("synth: feature_dim must be >= 1");
  if (latent_dim < 0 || latent_dim > feature_dim) throw ConfigError("synth: latent_dim must be in [0, feature_dim]");
  if (n_topics < 0) throw ConfigError("synth: n_topics must be >= 0");
  if (!(ambient_noise >= 0.0)) throw ConfigError("synth: ambient_noise must be >= 0");
  if (groups.empty()) throw ConfigError("synth: no redundancy groups");
  int total = 0;
  for (int g : groups) {
    if (g < 1) throw ConfigError("synth: group sizes must be >= 1");
    total += g;
  }
  if (total != n_features) {
    throw ConfigError("synth: group sizes sum to " + std::to_string(total) + " but n_features is " + std::to_string(n_features));
  }
  if (!group_snr.empty() && group_snr.size() != groups.size()) throw ConfigError("synth: group_snr needs one value per group");
  for (double s : group_snr)
    if (!(s > 0.0)) throw ConfigError("synth: SNR must be > 0");
  if (!(snr_min > 0.0) || !(snr_max >= snr_min)) throw ConfigError("synth: need 0 < snr_min <= snr_max");
  if (!(group_noise >= 0.0) || !(private_noise >= 0.0) || !(noise_decay >= 0.0)) throw ConfigError("synth: noise levels must be >= 0");
  if (n_visual < 1 || n_asr < 1 || n_ocr < 1) throw ConfigError("synth: each modality needs >= 1 concept");
  for (double p : {detect_prob, asr_prob, ocr_prob})
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("synth: probabilities must be in [0,1]");
}

bool SynthConfig::set(const std::string& key, const std::string& v) {
  if (key == "n_events") n_events = to_int(key, v);
  else if (key == "n_videos") n_videos = to_int(key, v);
  else if (key == "n_background") n_background = to_int(key, v);
  else if (key == "n_exemplars") n_exemplars = to_int(key, v);
  else if (key == "test_positives") test_positives = to_int(key, v);
  else if (key == "n_features") n_features = to_int(key, v);
  else if (key == "groups") {
    groups.clear();
    for (const auto& t : io::split(v, ',')) groups.push_back(to_int(key, std::string(io::trim(t))));
  } else if (key == "feature_dim") feature_dim = to_int(key, v);
  else if (key == "group_snr") {
    group_snr.clear();
    if (!io::trim(v).empty())
      for (const auto& t : io::split(v, ',')) group_snr.push_back(to_double(key, std::string(io::trim(t))));
  } else if (key == "snr_min") snr_min = to_double(key, v);
  else if (key == "snr_max") snr_max = to_double(key, v);
  else if (key == "group_noise") group_noise = to_double(key, v);
  else if (key == "private_noise") private_noise = to_double(key, v);
  else if (key == "noise_decay") noise_decay = to_double(key, v);
  else if (key == "latent_dim") latent_dim = to_int(key, v);
  else if (key == "ambient_noise") ambient_noise = to_double(key, v);
  else if (key == "n_topics") n_topics = to_int(key, v);
  else if (key == "n_visual") n_visual = to_int(key, v);
  else if (key == "n_asr") n_asr = to_int(key, v);
  else if (key == "n_ocr") n_ocr = to_int(key, v);
  else if (key == "detect_prob") detect_prob = to_double(key, v);
  else if (key == "detect_boost") detect_boost = to_double(key, v);
  else if (key == "asr_prob") asr_prob = to_double(key, v);
  else if (key == "ocr_prob") ocr_prob = to_double(key, v);
  else if (key == "seed") seed = to_u64(key, v);
  else return false;
  return true;
}

std::map<std::string, std::string> SynthConfig::to_map() const {
  return {{"n_events", std::to_string(n_events)},
          {"n_videos", std::to_string(n_videos)},
          {"n_background", std::to_string(n_background)},
          {"n_exemplars", std::to_string(n_exemplars)},
          {"test_positives", std::to_string(test_positives)},
          {"n_features", std::to_string(n_features)},
          {"groups", join(groups)},
          {"feature_dim", std::to_string(feature_dim)},
          {"group_snr", join(group_snr)},
          {"snr_min", fmt(snr_min)},
          {"snr_max", fmt(snr_max)},
          {"group_noise", fmt(group_noise)},
          {"private_noise", fmt(private_noise)},
          {"noise_decay", fmt(noise_decay)},
          {"latent_dim", std::to_string(latent_dim)},
          {"ambient_noise", fmt(ambient_noise)},
          {"n_topics", std::to_string(n_topics)},
          {"n_visual", std::to_string(n_visual)},
          {"n_asr", std::to_string(n_asr)},
          {"n_ocr", std::to_string(n_ocr)},
          {"detect_prob", fmt(detect_prob)},
          {"detect_boost", fmt(detect_boost)},
          {"asr_prob", fmt(asr_prob)},
          {"ocr_prob", fmt(ocr_prob)},
          {"seed", std::to_string(seed)}};
}

double SynthConfig::snr_of_group(int g) const {
  if (!group_snr.empty()) return group_snr[static_cast<std::size_t>(g)];
  if (groups.size() == 1) return snr_max;
  // Groups are listed largest first; the ramp makes big groups weak.
  return snr_min + (snr_max - snr_min) * g / static_cast<double>(groups.size() - 1);
}

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::VectorXd random_unit(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> n01;
  Eigen::VectorXd a(d);
  for (int j = 0; j < d; ++j) a[j] = n01(rng);
  return a / a.norm();
}

}  // namespace

Dataset synth_generate(const SynthConfig& config) {
  config.validate();
  Dataset ds;
  ds.config = config;
  const int d = config.feature_dim;
  const int ng = static_cast<int>(config.groups.size());
  std::mt19937_64 rng(derive_seed(config.seed, "synth"));
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u01;

  for (int e = 0; e < config.n_events; ++e) ds.events.push_back("E" + pad(e + 1, 3));

  // Videos: exemplars per event, shared background, test collection.
  struct Video {
    VideoId id;
    int event = -1;
    double strength = 0.0;
  };
  std::vector<Video> videos;
  for (int e = 0; e < config.n_events; ++e) {
    for (int i = 0; i < config.n_exemplars; ++i) {
      videos.push_back({VideoId("x" + ds.events[e] + "_" + pad(i, 4)), e, 0.5 + u01(rng)});
      ds.gt.set_split(videos.back().id, Split::Exemplar);
      ds.gt.add_positive(ds.events[e], videos.back().id);
    }
  }
  for (int i = 0; i < config.n_background; ++i) {
    videos.push_back({VideoId("b" + pad(i, 5)), -1, 0.0});
    ds.gt.set_split(videos.back().id, Split::Background);
  }
  std::vector<int> order(static_cast<std::size_t>(config.n_videos));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> test_event(static_cast<std::size_t>(config.n_videos), -1);
  for (int e = 0; e < config.n_events; ++e)
    for (int i = 0; i < config.test_positives; ++i) test_event[order[e * config.test_positives + i]] = e;
  const std::size_t first_test = videos.size();
  for (int i = 0; i < config.n_videos; ++i) {
    const int e = test_event[i];
    videos.push_back({VideoId("t" + pad(i, 5)), e, e >= 0 ? 0.5 + u01(rng) : 0.0});
    ds.gt.set_split(videos.back().id, Split::Test);
    if (e >= 0) ds.gt.add_positive(ds.events[e], videos.back().id);
  }
  ds.gt.validate();
  const auto nv = static_cast<Eigen::Index>(videos.size());

  // Visual features: latent event direction per group, shared group noise,
  // private noise per feature.
  const int k = config.latent_dim > 0 ? config.latent_dim : d;
  std::vector<std::vector<Eigen::VectorXd>> dir(static_cast<std::size_t>(ng));
  std::vector<RowMatrixD> embed;
  for (int g = 0; g < ng; ++g) {
    for (int e = 0; e < config.n_events; ++e) dir[g].push_back(random_unit(rng, k));
    if (config.latent_dim == 0) {
      embed.push_back(RowMatrixD::Identity(d, d));
      continue;
    }
    RowMatrixD a(d, k);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n01(rng);
    embed.push_back(Eigen::HouseholderQR<RowMatrixD>(a).householderQ() * RowMatrixD::Identity(d, k));
  }
  Eigen::VectorXd noise_sd(k);
  for (int j = 0; j < k; ++j) noise_sd[j] = config.group_noise * std::exp(-0.5 * config.noise_decay * j);

  int f = 0;
  for (int g = 0; g < ng; ++g) {
    RowMatrixD base(nv, k);
    if (config.n_topics > 0) {
      RowMatrixD topics(config.n_topics, k);
      for (int t = 0; t < config.n_topics; ++t)
        for (int j = 0; j < k; ++j) topics(t, j) = noise_sd[j] * n01(rng);
      std::uniform_int_distribution<int> pick_topic(0, config.n_topics - 1);
      for (Eigen::Index v = 0; v < nv; ++v) base.row(v) = topics.row(pick_topic(rng));
    } else {
      for (Eigen::Index v = 0; v < nv; ++v)
        for (int j = 0; j < k; ++j) base(v, j) = noise_sd[j] * n01(rng);
    }
    for (int member = 0; member < config.groups[g]; ++member, ++f) {
      const double snr = config.snr_of_group(g) * (0.8 + 0.4 * u01(rng));
      const bool bow = f % 2 == 0;
      RowMatrixF values(nv, d);
      for (Eigen::Index v = 0; v < nv; ++v) {
        const auto& vid = videos[static_cast<std::size_t>(v)];
        Eigen::VectorXd z = base.row(v).transpose();
        for (int j = 0; j < k; ++j) z[j] += config.private_noise * n01(rng);
        if (vid.event >= 0) z += snr * vid.strength * dir[g][vid.event];
        Eigen::VectorXd r = embed[g] * z;
        for (int j = 0; j < d; ++j) r[j] += config.ambient_noise * n01(rng);
        if (bow) {
          double sum = 0.0;
          for (int j = 0; j < d; ++j) sum += (r[j] = softplus(r[j]));
          r /= sum;
        } else {
          for (int j = 0; j < d; ++j) r[j] = std::copysign(std::sqrt(std::abs(r[j])), r[j]);
          const double nrm = r.norm();
          if (nrm > 0.0) r /= nrm;
        }
        values.row(v) = r.cast<float>().transpose();
      }
      std::vector<VideoId> ids;
      ids.reserve(videos.size());
      for (const auto& vid : videos) ids.push_back(vid.id);
      ds.features.emplace_back("f" + pad(f, 2) + (bow ? "_bow" : "_fv"), std::move(ids), std::move(values));
      ds.kinds.push_back(bow ? "bow" : "fv");
      ds.feature_group.push_back(g);
    }
  }

  // Semantic side: concept vocabulary, per-event key concepts, detector
  // scores and ASR/OCR counts for the test collection.
  std::vector<std::string> concepts;
  std::vector<Modality> mods;
  for (int i = 0; i < config.n_visual; ++i) {
    concepts.push_back("vis" + pad(i, 3));
    mods.push_back(Modality::Visual);
  }
  for (int i = 0; i < config.n_asr; ++i) {
    concepts.push_back("asr" + pad(i, 3));
    mods.push_back(Modality::Asr);
  }
  for (int i = 0; i < config.n_ocr; ++i) {
    concepts.push_back("ocr" + pad(i, 3));
    mods.push_back(Modality::Ocr);
  }
  ds.vocab = ConceptVocabulary(concepts, mods);
  auto pick = [&](int n, int count) {
    std::vector<int> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    std::vector<int> out;
    std::sample(all.begin(), all.end(), std::back_inserter(out), count, rng);
    return out;
  };
  struct Keys {
    std::vector<int> vis, asr, ocr;
  };
  std::vector<Keys> keys;
  for (int e = 0; e < config.n_events; ++e)
    keys.push_back({pick(config.n_visual, 3), pick(config.n_asr, 2), pick(config.n_ocr, 1)});

  const auto nt = static_cast<Eigen::Index>(config.n_videos);
  ModalityDocs vis{ds.vocab.terms(Modality::Visual), RowMatrixD(nt, config.n_visual)};
  ModalityDocs asr{ds.vocab.terms(Modality::Asr), RowMatrixD::Zero(nt, config.n_asr)};
  ModalityDocs ocr{ds.vocab.terms(Modality::Ocr), RowMatrixD::Zero(nt, config.n_ocr)};
  std::poisson_distribution<int> asr_bg(0.05), ocr_bg(0.02);
  for (Eigen::Index t = 0; t < nt; ++t) {
    const auto& vid = videos[first_test + static_cast<std::size_t>(t)];
    for (int c = 0; c < config.n_visual; ++c) vis.values(t, c) = logistic(n01(rng) - 2.5);
    for (int c = 0; c < config.n_asr; ++c) asr.values(t, c) = asr_bg(rng);
    for (int c = 0; c < config.n_ocr; ++c) ocr.values(t, c) = ocr_bg(rng);
    if (vid.event < 0) continue;
    const auto& k = keys[static_cast<std::size_t>(vid.event)];
    for (int c : k.vis)
      if (u01(rng) < config.detect_prob) vis.values(t, c) = logistic(n01(rng) - 2.5 + config.detect_boost * vid.strength);
    std::poisson_distribution<int> boost(2.0 * vid.strength);
    for (int c : k.asr)
      if (u01(rng) < config.asr_prob) asr.values(t, c) += 1 + boost(rng);
    for (int c : k.ocr)
      if (u01(rng) < config.ocr_prob) ocr.values(t, c) += 1 + boost(rng);
  }
  for (Eigen::Index t = 0; t < nt; ++t) ds.docs.videos.push_back(videos[first_test + static_cast<std::size_t>(t)].id);
  ds.docs.modalities.emplace(Modality::Visual, std::move(vis));
  ds.docs.modalities.emplace(Modality::Asr, std::move(asr));
  ds.docs.modalities.emplace(Modality::Ocr, std::move(ocr));

  // Query words: one per key concept plus one distractor per event; the
  // similarity matrix also carries low background similarities.
  const auto nc = static_cast<Eigen::Index>(concepts.size());
  std::vector<std::vector<std::pair<int, double>>> word_hits;
  for (int e = 0; e < config.n_events; ++e) {
    auto& q = ds.queries[ds.events[e]];
    const auto& k = keys[static_cast<std::size_t>(e)];
    std::vector<int> targets;
    for (int c : k.vis) targets.push_back(c);
    for (int c : k.asr) targets.push_back(config.n_visual + c);
    for (int c : k.ocr) targets.push_back(config.n_visual + config.n_asr + c);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      q.push_back("w" + ds.events[e].substr(1) + "_" + std::to_string(i));
      word_hits.push_back({{targets[i], 0.6 + 0.4 * u01(rng)}});
    }
    q.push_back("w" + ds.events[e].substr(1) + "_" + std::to_string(targets.size()));
    word_hits.push_back({{static_cast<int>(u01(rng) * static_cast<double>(nc)) % static_cast<int>(nc), 0.3 + 0.2 * u01(rng)}});
  }
  ds.similarity.concepts = concepts;
  ds.similarity.sim.resize(static_cast<Eigen::Index>(word_hits.size()), nc);
  Eigen::Index w = 0;
  for (int e = 0; e < config.n_events; ++e) {
    for (const auto& word : ds.queries[ds.events[e]]) {
      ds.similarity.words.push_back(word);
      for (Eigen::Index c = 0; c < nc; ++c) ds.similarity.sim(w, c) = 0.25 * u01(rng);
      for (const auto& [c, s] : word_hits[static_cast<std::size_t>(w)]) ds.similarity.sim(w, c) = s;
      ++w;
    }
  }
  ds.similarity.validate();
  return ds;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir / "features");
  std::string cfg;
  for (const auto& [k, v] : ds.config.to_map()) cfg += k + " = " + v + "\n";
  io::write_file_atomic(dir / "synth.cfg", cfg);
  std::string ftsv = "feature\tkind\tgroup\n";
  for (std::size_t f = 0; f < ds.features.size(); ++f) {
    ftsv += ds.features[f].name() + "\t" + ds.kinds[f] + "\t" + std::to_string(ds.feature_group[f]) + "\n";
    io::write_feature_matrix(dir / "features" / (ds.features[f].name() + ".fmx"), ds.features[f]);
  }
  io::write_file_atomic(dir / "features.tsv", ftsv);
  io::write_file_atomic(dir / "ground_truth.csv", io::format_ground_truth_csv(ds.gt));
  std::string q = "event_id\twords\n";
  for (const auto& e : ds.events) {
    q += e + "\t";
    const auto& words = ds.queries.at(e);
    for (std::size_t i = 0; i < words.size(); ++i) q += (i ? " " : "") + words[i];
    q += "\n";
  }
  io::write_file_atomic(dir / "queries.tsv", q);
  std::filesystem::create_directories(dir / "semantic");
  io::write_file_atomic(dir / "semantic" / "vocab.csv", format_vocabulary_csv(ds.vocab));
  io::write_file_atomic(dir / "semantic" / "similarity.tsv", format_similarity_tsv(ds.similarity));
  write_semantic_docs(dir / "semantic", ds.docs);
}

Dataset read_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "features.tsv")) throw DataError("no dataset at " + dir.string());
  Dataset ds;
  for (const auto& [k, v] : parse_config_text(io::read_file(dir / "synth.cfg"))) {
    if (!ds.config.set(k, v)) throw DataError("synth.cfg: unknown key '" + k + "'");
  }
  bool header = true;
  for (const auto& line : io::split(io::read_file(dir / "features.tsv"), '\n')) {
    if (io::trim(line).empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto f = io::split(line, '\t');
    if (f.size() != 3) throw DataError("features.tsv: malformed row '" + line + "'");
    ds.features.push_back(io::read_feature_matrix(dir / "features" / (f[0] + ".fmx")));
    ds.kinds.push_back(f[1]);
    ds.feature_group.push_back(to_int("group", f[2]));
  }
  ds.gt = io::read_ground_truth_csv(dir / "ground_truth.csv");
  ds.events = ds.gt.events();
  header = true;
  for (const auto& line : io::split(io::read_file(dir / "queries.tsv"), '\n')) {
    if (io::trim(line).empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto f = io::split(line, '\t');
    if (f.size() != 2) throw DataError("queries.tsv: malformed row '" + line + "'");
    auto& words = ds.queries[f[0]];
    for (const auto& w : io::split(f[1], ' '))
      if (!w.empty()) words.push_back(w);
  }
  ds.vocab = parse_vocabulary_csv(io::read_file(dir / "semantic" / "vocab.csv"));
  ds.similarity = parse_similarity_tsv(io::read_file(dir / "semantic" / "similarity.tsv"));
  ds.docs = read_semantic_docs(dir / "semantic", ds.vocab);
  return ds;
}

std::vector<EnsembleEvent> synth_ensemble(const EnsembleConfig& config) {
  std::mt19937_64 rng(derive_seed(config.seed, "ensemble"));
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u01;
  const int ng = static_cast<int>(config.groups.size());
  int nf = 0;
  for (int g : config.groups) nf += g;
  std::vector<std::string> names;
  std::vector<int> group_of;
  for (int g = 0; g < ng; ++g)
    for (int m = 0; m < config.groups[g]; ++m) {
      names.push_back("s" + pad(static_cast<int>(names.size()), 2));
      group_of.push_back(g);
    }
  std::vector<EnsembleEvent> out;
  for (int e = 0; e < config.n_events; ++e) {
    // Members of a group are noisy copies of one essential score, so they
    // share its SNR; only the private noise differs.
    std::vector<double> group_snr(static_cast<std::size_t>(ng));
    for (int g = 0; g < ng; ++g) {
      const double base = ng == 1 ? config.snr_max : config.snr_min + (config.snr_max - config.snr_min) * g / double(ng - 1);
      group_snr[g] = base * (0.6 + 0.8 * u01(rng));
    }
    std::vector<double> snr(static_cast<std::size_t>(nf));
    for (int f = 0; f < nf; ++f) snr[f] = group_snr[group_of[f]];
    auto make = [&](const std::string& prefix, int n, int npos, std::set<VideoId>* positives) {
      ScoreMatrix m;
      m.event_id = "E" + pad(e + 1, 3);
      m.names = names;
      std::vector<int> order(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<double> rel(static_cast<std::size_t>(n), 0.0);
      for (int i = 0; i < npos; ++i) rel[order[i]] = 0.5 + u01(rng);
      for (int i = 0; i < n; ++i) m.videos.emplace_back(prefix + pad(i, 5));
      m.scores.resize(nf, n);
      for (int i = 0; i < n; ++i) {
        std::vector<double> z(static_cast<std::size_t>(ng));
        for (auto& v : z) v = config.group_noise * n01(rng);
        for (int f = 0; f < nf; ++f)
          m.scores(f, i) = snr[f] * rel[i] + z[group_of[f]] + config.private_noise * n01(rng);
      }
      m.labels.resize(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        m.labels[i] = rel[i] > 0.0 ? 1 : 0;
        if (positives && m.labels[i]) positives->insert(m.videos[i]);
      }
      return m;
    };
    EnsembleEvent ev;
    ev.heldout = make("h", config.heldout_positives + config.heldout_negatives, config.heldout_positives, nullptr);
    ev.test = make("t", config.test_videos, config.test_positives, &ev.test_positives);
    ev.test.labels.clear();
    out.push_back(std::move(ev));
  }
  return out;
}

}  // namespace cbvr
