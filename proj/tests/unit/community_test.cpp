#include <doctest.h>

#include <set>

#include "faithcheck/community.hpp"
#include "faithcheck/ids.hpp"
#include "support.hpp"

using namespace faithcheck;
using namespace faithcheck::graph;
using testsupport::json;

namespace {

Provenance prov() { return {"test", "toy"}; }

// Patient node "P" bridging clique {a1,a2,a3} (two edges) and clique
// {b1,b2,b3} (one edge).
struct Toy {
  PatientGraph g;
  std::vector<std::string> names = {"P", "a1", "a2", "a3", "b1", "b2", "b3"};
  std::vector<std::pair<int, int>> edges = {{1, 2}, {1, 3}, {2, 3}, {4, 5}, {4, 6}, {5, 6}, {0, 1}, {0, 2}, {0, 4}};

  Toy() {
    g.patient_id = "P0100";
    std::vector<std::string> ids;
    ids.push_back(g.add_entity(EntityType::Patient, "P", {}, prov()));
    for (int i = 1; i < 7; ++i) ids.push_back(g.add_entity(EntityType::Diagnosis, names[i], {}, prov()));
    for (auto [u, v] : edges) g.add_relation(ids[u], ids[v], RelationType::Indicates, prov());
    g.canonicalize_order();
  }
  std::string id(int i) const {
    return entity_id(g.patient_id, i == 0 ? "PATIENT" : "DIAGNOSIS", names[i]);
  }
};

// Newman modularity straight from the definition: sum over node pairs of
// (A_uv - k_u k_v / 2m) [c_u == c_v] / 2m.
double oracle_modularity(int n, const std::vector<std::pair<int, int>>& edges, unsigned mask) {
  std::vector<std::vector<double>> a(n, std::vector<double>(n, 0));
  std::vector<double> k(n, 0);
  for (auto [u, v] : edges) {
    a[u][v] += 1;
    a[v][u] += 1;
    k[u] += 1;
    k[v] += 1;
  }
  const double two_m = 2.0 * static_cast<double>(edges.size());
  double q = 0;
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v)
      if (((mask >> u) & 1u) == ((mask >> v) & 1u)) q += a[u][v] - k[u] * k[v] / two_m;
  return q / two_m;
}

}  // namespace

TEST_SUITE("community") {
  TEST_CASE("two cliques bridged by the patient") {
    Toy toy;
    // brute force over every split into two non-empty sides
    double best = -1;
    unsigned best_mask = 0;
    for (unsigned mask = 1; mask < (1u << 7) - 1; ++mask) {
      if (mask & 1u) continue;  // fix node 0 on side 0 to skip mirror images
      const double q = oracle_modularity(7, toy.edges, mask);
      if (q > best + 1e-12) {
        best = q;
        best_mask = mask;
      }
    }
    std::set<std::string> side0, side1;
    for (int i = 0; i < 7; ++i) ((best_mask >> i) & 1u ? side1 : side0).insert(toy.id(i));

    const auto comms = community::detect_communities(toy.g, 11);
    std::vector<const Community*> level0;
    for (const auto& c : comms)
      if (c.level == 0) level0.push_back(&c);
    REQUIRE(level0.size() == 2);
    std::set<std::set<std::string>> got;
    for (const auto* c : level0) got.insert(std::set<std::string>(c->members.begin(), c->members.end()));
    CHECK(got == std::set<std::set<std::string>>{side0, side1});

    // the library's modularity agrees with the oracle on the optimum
    community::WeightedGraph wg;
    wg.adj.resize(7);
    for (auto [u, v] : toy.edges) wg.add_edge(u, v);
    std::vector<int> membership(7);
    for (int i = 0; i < 7; ++i) membership[i] = (best_mask >> i) & 1u;
    CHECK(community::modularity(wg, membership) == doctest::Approx(best).epsilon(1e-12));
  }

  TEST_CASE("single entity") {
    PatientGraph g;
    g.patient_id = "P0100";
    const auto id = g.add_entity(EntityType::Patient, "Patient", {}, prov());
    const auto comms = community::detect_communities(g, 3);
    REQUIRE(comms.size() == 1);
    CHECK(comms[0].members == std::vector<std::string>{id});
  }

  TEST_CASE("same seed gives the same hierarchy") {
    const auto rec = ehr::load_bundle(testsupport::data_dir() / "fixture", "P0002");
    auto g = table_graph(rec);
    normalize(g);
    community::HierarchyOptions opt;
    opt.max_community_size = 4;
    const auto a = community::detect_communities(g, 99, opt);
    const auto b = community::detect_communities(g, 99, opt);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].id == b[i].id);
      CHECK(a[i].members == b[i].members);
    }
    // every level partitions all entities
    std::map<int, std::size_t> covered;
    for (const auto& c : a) covered[c.level] += c.members.size();
    for (const auto& [level, n] : covered) CHECK(n == g.entities.size());
  }

  TEST_CASE("summaries") {
    PatientGraph g;
    g.patient_id = "P0100";
    const auto a = g.add_entity(EntityType::Diagnosis, "Pneumonia", {}, prov());
    const auto b = g.add_entity(EntityType::Medication, "Azithromycin", {}, prov());
    g.add_relation(a, b, RelationType::Indicates, prov());
    g.communities = {{"L0C0", 0, {std::min(a, b), std::max(a, b)}, ""}};

    SUBCASE("extractive fallback names the members") {
      community::summarize_communities(g, nullptr);
      CHECK(g.communities[0].summary.find("Pneumonia") != std::string::npos);
      CHECK(g.communities[0].summary.find("Azithromycin") != std::string::npos);
    }
    SUBCASE("scripted summary is used verbatim") {
      llm::Gateway gw(std::make_shared<llm::ScriptedMock>(
          testsupport::one_stage("summarize", json::array({"Pneumonia treated with azithromycin."}))));
      community::summarize_communities(g, &gw);
      CHECK(g.communities[0].summary == "Pneumonia treated with azithromycin.");
    }
    SUBCASE("no communities is a no-op") {
      g.communities.clear();
      community::summarize_communities(g, nullptr);
      CHECK(g.communities.empty());
    }
  }
}
