#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "faithcheck/graph.hpp"

namespace faithcheck::retrieval {

inline constexpr int kDefaultDim = 256;

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual int dim() const = 0;
  virtual std::string id() const = 0;
  virtual Eigen::VectorXd embed(std::string_view text) const = 0;
};

// Signed feature hashing of character n-grams of the casefolded text,
// L2-normalized. Empty text maps to the zero vector.
class HashingEmbedder : public Embedder {
 public:
  explicit HashingEmbedder(int dim = kDefaultDim, int ngram = 3);
  int dim() const override { return dim_; }
  std::string id() const override;
  Eigen::VectorXd embed(std::string_view text) const override;

 private:
  int dim_;
  int ngram_;
};

// OpenAI-compatible /embeddings endpoint. Failures raise EmbeddingBackend.
class RemoteEmbedder : public Embedder {
 public:
  RemoteEmbedder(std::string base_url, std::string model, int dim, std::string token = {});
  int dim() const override { return dim_; }
  std::string id() const override { return "remote:" + model_; }
  Eigen::VectorXd embed(std::string_view text) const override;

 private:
  std::string base_url_;
  std::string model_;
  int dim_;
  std::string token_;
};

Eigen::VectorXd embed(std::string_view text, int dim = kDefaultDim);
double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct EntityCandidate {
  std::string entity_id;
  double similarity = 0;
  int hop = 0;
};

struct CommunityReport {
  std::string community_id;
  std::string summary;
};

struct EvidenceContext {
  int sentence_index = 0;
  std::vector<EntityCandidate> entities;  // hop-0 by rank, then hop-1 by id
  std::vector<graph::Relation> relations;
  std::vector<CommunityReport> community_reports;
  std::string rendered_text;
  bool truncated = false;

  std::string digest() const;
};

struct RetrievalOptions {
  int k = 20;
  std::size_t budget_chars = 4000;
};

// Holds entity embeddings for one graph so many sentences can be served.
class Retriever {
 public:
  explicit Retriever(const graph::PatientGraph& g, std::shared_ptr<const Embedder> embedder = nullptr);
  EvidenceContext retrieve(const std::string& sentence, int index, const RetrievalOptions& options = {}) const;

 private:
  const graph::PatientGraph& g_;
  std::shared_ptr<const Embedder> embedder_;
  std::vector<Eigen::VectorXd> vectors_;
};

EvidenceContext retrieve_context(const std::string& sentence, int index, const graph::PatientGraph& g, int k = 20);

}  // namespace faithcheck::retrieval
