// Eigen before httplib: <resolv.h> defines a _res macro that clashes with Eigen.
#include "faithcheck/retrieval.hpp"

#include <httplib.h>

#include <algorithm>
#include <map>
#include <set>

#include "faithcheck/error.hpp"
#include "faithcheck/hash.hpp"
#include "faithcheck/ids.hpp"
#include "faithcheck/text.hpp"

namespace faithcheck::retrieval {

HashingEmbedder::HashingEmbedder(int dim, int ngram) : dim_(dim), ngram_(ngram) {
  if (dim < 1 || ngram < 1) fail(ErrorKind::InvalidArgument, "embedding dim and n-gram size must be >= 1");
}

std::string HashingEmbedder::id() const {
  return "hash-char" + std::to_string(ngram_) + "-d" + std::to_string(dim_);
}

Eigen::VectorXd HashingEmbedder::embed(std::string_view raw) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim_);
  const std::string folded = text::fold(raw);
  if (folded.empty()) return v;
  const std::string padded = " " + folded + " ";
  const std::size_t n = static_cast<std::size_t>(ngram_);
  for (std::size_t i = 0; i + n <= padded.size(); ++i) {
    const std::uint64_t h = fnv1a(std::string_view(padded).substr(i, n));
    const auto slot = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim_));
    v[slot] += (h >> 63) ? -1.0 : 1.0;
  }
  const double norm = v.norm();
  if (norm > 0) v /= norm;
  return v;
}

RemoteEmbedder::RemoteEmbedder(std::string base_url, std::string model, int dim, std::string token)
    : base_url_(std::move(base_url)), model_(std::move(model)), dim_(dim), token_(std::move(token)) {}

Eigen::VectorXd RemoteEmbedder::embed(std::string_view input) const {
  const auto scheme = base_url_.find("://");
  if (scheme == std::string::npos) fail(ErrorKind::EmbeddingBackend, "base_url needs a scheme");
  const auto path_at = base_url_.find('/', scheme + 3);
  std::string prefix = path_at == std::string::npos ? "" : base_url_.substr(path_at);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  httplib::Client client(base_url_.substr(0, path_at));
  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
  const nlohmann::json body{{"model", model_}, {"input", std::string(input)}};
  auto res = client.Post(prefix + "/embeddings", headers, body.dump(), "application/json");
  if (!res) fail(ErrorKind::EmbeddingBackend, "transport error: " + httplib::to_string(res.error()));
  if (res->status != 200) fail(ErrorKind::EmbeddingBackend, "HTTP " + std::to_string(res->status));
  try {
    const auto values = nlohmann::json::parse(res->body).at("data").at(0).at("embedding").get<std::vector<double>>();
    if (static_cast<int>(values.size()) != dim_) {
      fail(ErrorKind::EmbeddingBackend, "expected dimension " + std::to_string(dim_) + ", got " +
                                            std::to_string(values.size()));
    }
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(values.data(), dim_);
    if (!v.allFinite()) fail(ErrorKind::EmbeddingBackend, "non-finite embedding");
    const double norm = v.norm();
    return norm > 0 ? Eigen::VectorXd(v / norm) : v;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::EmbeddingBackend, e.what());
  }
}

Eigen::VectorXd embed(std::string_view text, int dim) { return HashingEmbedder(dim).embed(text); }

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0 || nb == 0) return 0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

std::string EvidenceContext::digest() const { return Digest().add(rendered_text).hex(); }

Retriever::Retriever(const graph::PatientGraph& g, std::shared_ptr<const Embedder> embedder)
    : g_(g), embedder_(embedder ? std::move(embedder) : std::make_shared<HashingEmbedder>()) {
  vectors_.reserve(g.entities.size());
  for (const auto& e : g.entities) vectors_.push_back(embedder_->embed(graph::entity_text(e)));
}

namespace {

std::string entity_line(const graph::Entity& e, const EntityCandidate& c) {
  std::string line = citation_marker(e.id) + " " + std::string(graph::to_string(e.etype)) + " " + e.canonical_name;
  std::vector<std::string> attrs;
  for (const auto& [k, v] : e.attributes) attrs.push_back(k + "=" + v);
  if (!attrs.empty()) line += " (" + text::join(attrs, "; ") + ")";
  if (c.hop == 0) line += " sim=" + text::format_fixed(c.similarity, 3);
  return line;
}

std::string render(const graph::PatientGraph& g, const EvidenceContext& ctx) {
  std::string out = "ENTITIES:\n";
  for (const auto& c : ctx.entities) {
    if (c.hop == 0) out += entity_line(*g.find(c.entity_id), c) + "\n";
  }
  out += "NEIGHBORS:\n";
  for (const auto& c : ctx.entities) {
    if (c.hop == 1) out += entity_line(*g.find(c.entity_id), c) + "\n";
  }
  out += "RELATIONS:\n";
  std::vector<std::string> lines;
  for (const auto& r : ctx.relations) {
    lines.push_back(g.find(r.src)->canonical_name + " " + citation_marker(r.src) + " -" +
                    std::string(graph::to_string(r.rtype)) + "-> " + g.find(r.dst)->canonical_name + " " +
                    citation_marker(r.dst));
  }
  std::sort(lines.begin(), lines.end());
  for (const auto& l : lines) out += l + "\n";
  out += "COMMUNITY REPORTS:\n";
  for (const auto& r : ctx.community_reports) out += r.community_id + ": " + r.summary + "\n";
  return out;
}

void restrict_relations(const graph::PatientGraph& g, EvidenceContext& ctx) {
  std::set<std::string> included;
  for (const auto& c : ctx.entities) included.insert(c.entity_id);
  ctx.relations.clear();
  for (const auto& r : g.relations) {
    if (included.count(r.src) && included.count(r.dst)) ctx.relations.push_back(r);
  }
}

}  // namespace

EvidenceContext Retriever::retrieve(const std::string& sentence, int index, const RetrievalOptions& o) const {
  if (g_.entities.empty()) fail(ErrorKind::EmptyGraph, "graph for " + g_.patient_id + " has no entities");
  if (o.k < 1) fail(ErrorKind::InvalidArgument, "k must be >= 1");
  const Eigen::VectorXd q = embedder_->embed(sentence);

  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < g_.entities.size(); ++i) ranked.emplace_back(cosine(q, vectors_[i]), i);
  // entities are stored by ascending id, so index order breaks ties
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(o.k), ranked.size());

  EvidenceContext ctx;
  ctx.sentence_index = index;
  std::set<std::size_t> hop0;
  for (std::size_t r = 0; r < k; ++r) {
    ctx.entities.push_back({g_.entities[ranked[r].second].id, ranked[r].first, 0});
    hop0.insert(ranked[r].second);
  }
  const auto adj = g_.adjacency();
  std::set<std::size_t> hop1;
  for (auto i : hop0) {
    for (auto j : adj[i]) {
      if (!hop0.count(j)) hop1.insert(j);
    }
  }
  for (auto j : hop1) ctx.entities.push_back({g_.entities[j].id, 0.0, 1});
  restrict_relations(g_, ctx);

  std::set<std::string> hop0_ids;
  for (auto i : hop0) hop0_ids.insert(g_.entities[i].id);
  std::vector<CommunityReport> reports;
  for (const auto& c : g_.communities) {
    const bool hit = std::any_of(c.members.begin(), c.members.end(), [&](const std::string& m) { return hop0_ids.count(m) > 0; });
    if (hit) reports.push_back({c.id, c.summary});
  }
  std::sort(reports.begin(), reports.end(),
            [](const CommunityReport& a, const CommunityReport& b) { return a.community_id < b.community_id; });
  ctx.community_reports = std::move(reports);

  ctx.rendered_text = render(g_, ctx);
  while (ctx.rendered_text.size() > o.budget_chars && !ctx.community_reports.empty()) {
    ctx.community_reports.pop_back();
    ctx.truncated = true;
    ctx.rendered_text = render(g_, ctx);
  }
  while (ctx.rendered_text.size() > o.budget_chars && ctx.entities.back().hop == 1) {
    ctx.entities.pop_back();
    restrict_relations(g_, ctx);
    ctx.truncated = true;
    ctx.rendered_text = render(g_, ctx);
  }
  return ctx;
}

EvidenceContext retrieve_context(const std::string& sentence, int index, const graph::PatientGraph& g, int k) {
  if (g.entities.empty()) fail(ErrorKind::EmptyGraph, "graph for " + g.patient_id + " has no entities");
  RetrievalOptions o;
  o.k = k;
  return Retriever(g).retrieve(sentence, index, o);
}

}  // namespace faithcheck::retrieval
