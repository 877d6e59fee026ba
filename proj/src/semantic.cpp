#include "cbvr/semantic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "cbvr/io.hpp"
#include "cbvr/quantizers.hpp"

namespace cbvr {

Modality parse_modality(std::string_view token) {
  if (token == "visual") return Modality::Visual;
  if (token == "asr") return Modality::Asr;
  if (token == "ocr") return Modality::Ocr;
  throw ConfigError("unknown modality '" + std::string(token) + "'");
}

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::Visual: return "visual";
    case Modality::Asr: return "asr";
    case Modality::Ocr: return "ocr";
  }
  return "visual";
}

ConceptVocabulary::ConceptVocabulary(std::vector<std::string> concepts, std::vector<Modality> modalities)
    : concepts_(std::move(concepts)), modality_(std::move(modalities)) {
  if (concepts_.empty()) throw DataError("vocabulary is empty");
  if (concepts_.size() != modality_.size()) throw DataError("vocabulary: modality count mismatch");
  for (std::size_t i = 0; i < concepts_.size(); ++i) {
    if (concepts_[i].empty()) throw DataError("vocabulary: empty concept token");
    if (!index_.emplace(concepts_[i], static_cast<int>(i)).second) {
      throw DataError("vocabulary: duplicate concept '" + concepts_[i] + "'");
    }
  }
}

int ConceptVocabulary::index_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

std::vector<std::string> ConceptVocabulary::terms(Modality m) const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < concepts_.size(); ++i)
    if (modality_[i] == m) out.push_back(concepts_[i]);
  return out;
}

ConceptVocabulary parse_vocabulary_csv(std::string_view text) {
  std::vector<std::string> concepts;
  std::vector<Modality> mods;
  bool header = true;
  for (const auto& raw : io::split(text, '\n')) {
    const auto line = io::trim(raw);
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line != "concept,modality") throw DataError("vocabulary: expected header 'concept,modality'");
      continue;
    }
    const auto f = io::split(line, ',');
    if (f.size() != 2) throw DataError("vocabulary: malformed row '" + std::string(line) + "'");
    concepts.emplace_back(io::trim(f[0]));
    try {
      mods.push_back(parse_modality(io::trim(f[1])));
    } catch (const ConfigError& e) {
      throw DataError(std::string("vocabulary: ") + e.what());
    }
  }
  return ConceptVocabulary(std::move(concepts), std::move(mods));
}

std::string format_vocabulary_csv(const ConceptVocabulary& vocab) {
  std::string out = "concept,modality\n";
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    out += vocab.concepts()[i];
    out += ',';
    out += to_string(vocab.modality(i));
    out += '\n';
  }
  return out;
}

void SimilarityMatrix::validate() const {
  if (sim.rows() != static_cast<Eigen::Index>(words.size()) || sim.cols() != static_cast<Eigen::Index>(concepts.size())) {
    throw DataError("similarity matrix: shape does not match its labels");
  }
  for (Eigen::Index i = 0; i < sim.rows(); ++i)
    for (Eigen::Index j = 0; j < sim.cols(); ++j)
      if (!(sim(i, j) >= 0.0 && sim(i, j) <= 1.0)) {
        throw DataError("similarity matrix: value outside [0,1] for word '" + words[static_cast<std::size_t>(i)] + "'");
      }
}

SimilarityMatrix parse_similarity_tsv(std::string_view text) {
  SimilarityMatrix s;
  std::vector<std::vector<double>> rows;
  bool header = true;
  for (const auto& raw : io::split(text, '\n')) {
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (io::trim(line).empty()) continue;
    auto f = io::split(line, '\t');
    if (header) {
      header = false;
      // A leading empty cell lines the header up with the word column.
      if (!f.empty() && io::trim(f.front()).empty()) f.erase(f.begin());
      for (const auto& c : f) s.concepts.emplace_back(io::trim(c));
      continue;
    }
    if (f.size() != s.concepts.size() + 1) throw DataError("similarity matrix: row width mismatch for '" + f[0] + "'");
    s.words.emplace_back(io::trim(f[0]));
    std::vector<double> r;
    for (std::size_t j = 1; j < f.size(); ++j) {
      try {
        std::size_t used = 0;
        r.push_back(std::stod(f[j], &used));
        if (used != f[j].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw DataError("similarity matrix: bad number '" + f[j] + "'");
      }
    }
    rows.push_back(std::move(r));
  }
  s.sim.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(s.concepts.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) s.sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  s.validate();
  return s;
}

std::string format_similarity_tsv(const SimilarityMatrix& s) {
  std::string out;
  for (const auto& c : s.concepts) {
    out += '\t';
    out += c;
  }
  out += '\n';
  char buf[32];
  for (std::size_t i = 0; i < s.words.size(); ++i) {
    out += s.words[i];
    for (std::size_t j = 0; j < s.concepts.size(); ++j) {
      std::snprintf(buf, sizeof buf, "\t%.9g", s.sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

std::map<Modality, double> SemanticQuery::modality_weights() const {
  std::map<Modality, double> w;
  for (const auto& t : terms) w[t.modality] += t.weight;
  return w;
}

SemanticQuery sqg_map(std::span<const std::string> words, const SimilarityMatrix& provider,
                      const ConceptVocabulary& vocab, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("sqg: tau must be in [0,1]");
  std::vector<double> weight(vocab.size(), 0.0);
  std::vector<bool> hit(vocab.size(), false);
  struct Miss {
    double sim;
    std::string word, target;
  };
  std::vector<Miss> misses;
  for (const auto& w : words) {
    auto wit = std::find(provider.words.begin(), provider.words.end(), w);
    if (wit == provider.words.end()) {
      misses.push_back({0.0, w, "(unknown word)"});
      continue;
    }
    const auto row = static_cast<Eigen::Index>(wit - provider.words.begin());
    for (std::size_t j = 0; j < provider.concepts.size(); ++j) {
      const int c = vocab.index_of(provider.concepts[j]);
      if (c < 0) continue;
      const double s = provider.sim(row, static_cast<Eigen::Index>(j));
      if (s >= tau && s > 0.0) {
        weight[static_cast<std::size_t>(c)] += s;
        hit[static_cast<std::size_t>(c)] = true;
      } else {
        misses.push_back({s, w, provider.concepts[j]});
      }
    }
  }
  SemanticQuery q;
  for (std::size_t c = 0; c < vocab.size(); ++c)
    if (hit[c]) q.terms.push_back({vocab.concepts()[c], vocab.modality(c), weight[c]});
  if (q.terms.empty()) {
    std::stable_sort(misses.begin(), misses.end(), [](const Miss& a, const Miss& b) { return a.sim > b.sim; });
    std::string msg = "query outside vocabulary; nearest misses:";
    for (std::size_t i = 0; i < std::min<std::size_t>(3, misses.size()); ++i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", misses[i].sim);
      msg += " " + misses[i].word + "->" + misses[i].target + " (" + buf + ")";
    }
    throw DataError(msg);
  }
  return q;
}

void SemanticDocMatrix::validate() const {
  for (const auto& [m, d] : modalities) {
    if (d.values.rows() != static_cast<Eigen::Index>(videos.size()) ||
        d.values.cols() != static_cast<Eigen::Index>(d.terms.size())) {
      throw DataError("semantic docs: " + std::string(to_string(m)) + " matrix shape mismatch");
    }
    if (!d.values.allFinite() || (d.values.array() < 0.0).any()) {
      throw DataError("semantic docs: " + std::string(to_string(m)) + " values must be finite and >= 0");
    }
  }
}

RetrievalModel parse_retrieval_model(std::string_view token) {
  if (token == "vsm") return RetrievalModel::Vsm;
  if (token == "tfidf") return RetrievalModel::Tfidf;
  if (token == "bm25") return RetrievalModel::Bm25;
  if (token == "lm") return RetrievalModel::Lm;
  throw ConfigError("unknown retrieval model '" + std::string(token) + "'");
}

std::vector<double> retrieval_scores(std::span<const std::pair<std::string, double>> query, const ModalityDocs& docs,
                                     RetrievalModel model, const RetrievalParams& params) {
  const Eigen::Index n = docs.values.rows();
  const Eigen::Index nt = docs.values.cols();
  std::vector<Eigen::Index> qcol;
  std::vector<double> qw;
  for (const auto& [term, w] : query) {
    auto it = std::find(docs.terms.begin(), docs.terms.end(), term);
    if (it == docs.terms.end()) throw DataError("retrieve: concept '" + term + "' missing from document matrix");
    qcol.push_back(static_cast<Eigen::Index>(it - docs.terms.begin()));
    qw.push_back(w);
  }
  std::vector<double> df(static_cast<std::size_t>(nt), 0.0);
  for (Eigen::Index t = 0; t < nt; ++t)
    for (Eigen::Index d = 0; d < n; ++d)
      if (docs.values(d, t) > 0.0) df[static_cast<std::size_t>(t)] += 1.0;
  const Eigen::VectorXd dl = docs.values.rowwise().sum();
  const double N = static_cast<double>(n);
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);

  switch (model) {
    case RetrievalModel::Vsm:
    case RetrievalModel::Tfidf: {
      std::vector<double> idf(static_cast<std::size_t>(nt), 1.0);
      if (model == RetrievalModel::Tfidf)
        for (Eigen::Index t = 0; t < nt; ++t)
          idf[t] = df[t] > 0.0 ? std::log(N / df[t]) : 0.0;
      double qn = 0.0;
      for (double w : qw) qn += w * w;
      qn = std::sqrt(qn);
      for (Eigen::Index d = 0; d < n; ++d) {
        double dn = 0.0;
        for (Eigen::Index t = 0; t < nt; ++t) {
          const double v = docs.values(d, t) * idf[t];
          dn += v * v;
        }
        dn = std::sqrt(dn);
        if (dn == 0.0 || qn == 0.0) continue;
        double dot = 0.0;
        for (std::size_t i = 0; i < qcol.size(); ++i) dot += qw[i] * docs.values(d, qcol[i]) * idf[qcol[i]];
        out[d] = dot / (qn * dn);
      }
      break;
    }
    case RetrievalModel::Bm25: {
      const double avgdl = n > 0 ? dl.mean() : 0.0;
      for (std::size_t i = 0; i < qcol.size(); ++i) {
        const double f = df[qcol[i]];
        if (f == 0.0) continue;
        const double idf = std::log((N - f + 0.5) / (f + 0.5) + 1.0);
        for (Eigen::Index d = 0; d < n; ++d) {
          const double tf = docs.values(d, qcol[i]);
          if (tf == 0.0) continue;
          const double norm = avgdl > 0.0 ? dl[d] / avgdl : 1.0;
          const double k = params.bm25_k1 * (1.0 - params.bm25_b + params.bm25_b * norm);
          out[d] += qw[i] * idf * tf * (params.bm25_k1 + 1.0) / (tf + k);
        }
      }
      break;
    }
    case RetrievalModel::Lm: {
      const double lam = params.lm_lambda;
      if (!(lam > 0.0 && lam <= 1.0)) throw ConfigError("retrieve: lm lambda must be in (0,1]");
      const double cl = dl.sum();
      for (std::size_t i = 0; i < qcol.size(); ++i) {
        const double cf = docs.values.col(qcol[i]).sum();
        if (cf == 0.0 || cl == 0.0) continue;  // term unseen in the collection
        const double pc = cf / cl;
        for (Eigen::Index d = 0; d < n; ++d) {
          const double pd = dl[d] > 0.0 ? docs.values(d, qcol[i]) / dl[d] : 0.0;
          out[d] += qw[i] * std::log((1.0 - lam) * pd + lam * pc);
        }
      }
      break;
    }
  }
  return out;
}

std::map<Modality, RankedList> retrieve(const SemanticQuery& query, const SemanticDocMatrix& docs,
                                        RetrievalModel model, const std::string& event_id,
                                        const RetrievalParams& params) {
  std::map<Modality, std::vector<std::pair<std::string, double>>> per;
  for (const auto& t : query.terms) per[t.modality].emplace_back(t.name, t.weight);
  std::map<Modality, RankedList> out;
  for (const auto& [m, q] : per) {
    auto it = docs.modalities.find(m);
    if (it == docs.modalities.end()) throw DataError("retrieve: no " + std::string(to_string(m)) + " documents");
    const auto s = retrieval_scores(q, it->second, model, params);
    std::vector<ScoreEntry> e(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) e[i] = {docs.videos[i], s[i]};
    out.emplace(m, to_ranked_list(ScoreList(event_id, std::string(to_string(m)), std::move(e))));
  }
  return out;
}

RankedList modality_fuse(const std::map<Modality, RankedList>& lists, const std::map<Modality, double>& weights) {
  if (lists.empty()) throw DataError("modality fusion: no lists");
  double total = 0.0;
  for (const auto& [m, l] : lists) {
    auto it = weights.find(m);
    const double w = it == weights.end() ? 0.0 : it->second;
    if (!(w >= 0.0)) throw ConfigError("modality fusion: weights must be >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw ConfigError("modality fusion: all weights are zero");
  const auto& first = lists.begin()->second;
  auto ids = first.ids();
  std::sort(ids.begin(), ids.end());
  std::unordered_map<VideoId, std::size_t> col;
  for (std::size_t i = 0; i < ids.size(); ++i) col.emplace(ids[i], i);
  std::vector<std::uint32_t> keys(ids.size());
  std::iota(keys.begin(), keys.end(), 0u);
  std::vector<double> fused(ids.size(), 0.0);
  for (const auto& [m, l] : lists) {
    auto it = weights.find(m);
    const double w = it == weights.end() ? 0.0 : it->second / total;
    if (l.size() != ids.size()) throw DataError("modality fusion: lists cover different collections");
    std::vector<double> s(ids.size(), 0.0);
    for (const auto& e : l.entries()) {
      auto c = col.find(e.id);
      if (c == col.end()) throw DataError("modality fusion: lists cover different collections");
      s[c->second] = e.score;
    }
    const auto n = normalize_vector(s, NormMethod::Rank, keys);
    for (std::size_t i = 0; i < n.size(); ++i) fused[i] += w * n[i];
  }
  std::vector<ScoreEntry> e(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) e[i] = {ids[i], fused[i]};
  return to_ranked_list(ScoreList(first.event_id(), "semantic", std::move(e)));
}

void write_semantic_docs(const std::filesystem::path& dir, const SemanticDocMatrix& docs) {
  docs.validate();
  std::filesystem::create_directories(dir);
  for (const auto& [m, d] : docs.modalities) {
    if (m == Modality::Visual) {
      RowMatrixF v = d.values.cast<float>();
      FeatureMatrix fm("visual", docs.videos, std::move(v));
      auto model = uq_train(fm, 256);
      auto codes = uq_encode(model, fm);
      index_write(dir / "visual.idx", make_uq_index(std::move(model), std::move(codes), docs.videos));
      continue;
    }
    std::string out;
    for (Eigen::Index r = 0; r < d.values.rows(); ++r) {
      nlohmann::ordered_json terms = nlohmann::ordered_json::object();
      for (Eigen::Index t = 0; t < d.values.cols(); ++t)
        if (d.values(r, t) > 0.0) terms[d.terms[static_cast<std::size_t>(t)]] = d.values(r, t);
      if (terms.empty()) continue;
      nlohmann::ordered_json j;
      j["video_id"] = docs.videos[static_cast<std::size_t>(r)].str();
      j["terms"] = terms;
      out += j.dump();
      out += '\n';
    }
    io::write_file_atomic(dir / (std::string(to_string(m)) + ".jsonl"), out);
  }
}

SemanticDocMatrix read_semantic_docs(const std::filesystem::path& dir, const ConceptVocabulary& vocab) {
  SemanticDocMatrix docs;
  const auto vis_path = dir / "visual.idx";
  FeatureMatrix visual;
  const bool has_visual = std::filesystem::exists(vis_path);
  if (has_visual) {
    visual = index_read(vis_path).decode("visual");
    docs.videos = visual.ids();
    std::sort(docs.videos.begin(), docs.videos.end());
  }
  struct Sparse {
    Modality m;
    std::vector<std::pair<VideoId, std::map<std::string, double>>> rows;
  };
  std::vector<Sparse> sparse;
  std::set<VideoId> seen(docs.videos.begin(), docs.videos.end());
  for (Modality m : {Modality::Asr, Modality::Ocr}) {
    const auto path = dir / (std::string(to_string(m)) + ".jsonl");
    if (!std::filesystem::exists(path)) continue;
    Sparse s{m, {}};
    for (const auto& line : io::split(io::read_file(path), '\n')) {
      if (io::trim(line).empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        std::map<std::string, double> terms;
        for (const auto& [k, v] : j.at("terms").items()) terms[k] = v.get<double>();
        s.rows.emplace_back(VideoId(j.at("video_id").get<std::string>()), std::move(terms));
      } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": malformed row: " + e.what());
      }
      if (!has_visual) seen.insert(s.rows.back().first);
      else if (!seen.count(s.rows.back().first)) {
        throw DataError(path.string() + ": video " + s.rows.back().first.str() + " missing from visual index");
      }
    }
    sparse.push_back(std::move(s));
  }
  if (!has_visual) docs.videos.assign(seen.begin(), seen.end());
  std::unordered_map<VideoId, Eigen::Index> row;
  for (std::size_t i = 0; i < docs.videos.size(); ++i) row.emplace(docs.videos[i], static_cast<Eigen::Index>(i));
  const auto n = static_cast<Eigen::Index>(docs.videos.size());
  if (has_visual) {
    ModalityDocs d;
    d.terms = vocab.terms(Modality::Visual);
    if (static_cast<Eigen::Index>(d.terms.size()) != visual.dim()) {
      throw DataError("visual index has " + std::to_string(visual.dim()) + " columns but the vocabulary lists " +
                      std::to_string(d.terms.size()) + " visual concepts");
    }
    d.values = visual.gather(docs.videos).cwiseMax(0.0);
    docs.modalities.emplace(Modality::Visual, std::move(d));
  }
  for (const auto& s : sparse) {
    ModalityDocs d;
    d.terms = vocab.terms(s.m);
    d.values = RowMatrixD::Zero(n, static_cast<Eigen::Index>(d.terms.size()));
    for (const auto& [id, terms] : s.rows) {
      for (const auto& [t, v] : terms) {
        auto it = std::find(d.terms.begin(), d.terms.end(), t);
        if (it == d.terms.end()) throw DataError("term '" + t + "' is not a " + std::string(to_string(s.m)) + " concept");
        d.values(row.at(id), static_cast<Eigen::Index>(it - d.terms.begin())) = v;
      }
    }
    docs.modalities.emplace(s.m, std::move(d));
  }
  docs.validate();
  return docs;
}

}  // namespace cbvr
