#include "faithcheck/community.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>
#include <set>

#include "faithcheck/error.hpp"
#include "faithcheck/hash.hpp"
#include "faithcheck/llm.hpp"
#include "faithcheck/prompts.hpp"
#include "faithcheck/random.hpp"
#include "faithcheck/text.hpp"

namespace faithcheck::community {

void WeightedGraph::add_edge(int u, int v, double w) {
  if (u == v) {
    if (self_loops.size() < adj.size()) self_loops.resize(adj.size(), 0.0);
    self_loops[u] += w;
    return;
  }
  for (auto* list : {&adj[u], &adj[v]}) {
    const int other = list == &adj[u] ? v : u;
    auto it = std::find_if(list->begin(), list->end(), [&](const auto& p) { return p.first == other; });
    if (it == list->end()) {
      list->emplace_back(other, w);
    } else {
      it->second += w;
    }
  }
}

double WeightedGraph::degree(int u) const {
  double d = 0;
  for (const auto& [v, w] : adj[u]) d += w;
  if (static_cast<std::size_t>(u) < self_loops.size()) d += 2 * self_loops[u];
  return d;
}

double WeightedGraph::total_weight() const {
  double t = 0;
  for (int u = 0; u < size(); ++u) t += degree(u);
  return t;
}

double modularity(const WeightedGraph& g, const std::vector<int>& membership, double resolution) {
  const double two_m = g.total_weight();
  if (two_m == 0) return 0;
  std::map<int, double> internal, total;
  for (int u = 0; u < g.size(); ++u) {
    total[membership[u]] += g.degree(u);
    if (static_cast<std::size_t>(u) < g.self_loops.size()) internal[membership[u]] += 2 * g.self_loops[u];
    for (const auto& [v, w] : g.adj[u]) {
      if (membership[u] == membership[v]) internal[membership[u]] += w;
    }
  }
  double q = 0;
  for (const auto& [c, k] : total) q += internal[c] / two_m - resolution * (k / two_m) * (k / two_m);
  return q;
}

namespace {

std::vector<int> relabel(const std::vector<int>& m) {
  std::map<int, int> ids;
  std::vector<int> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = ids.emplace(m[i], static_cast<int>(ids.size())).first->second;
  return out;
}

struct Level {
  WeightedGraph g;
  std::vector<double> node_weight;  // degree in the original graph
};

class Leiden {
 public:
  Leiden(std::uint64_t seed, const LeidenOptions& o) : rng_(seed), o_(o) {}

  std::vector<int> run(const WeightedGraph& g0) {
    const int n0 = g0.size();
    if (n0 == 0) return {};
    two_m_ = g0.total_weight();
    if (two_m_ == 0) {
      std::vector<int> m(n0);
      std::iota(m.begin(), m.end(), 0);
      return m;
    }
    Level level{g0, {}};
    for (int u = 0; u < n0; ++u) level.node_weight.push_back(g0.degree(u));

    std::vector<int> node_of(n0);  // original node -> node in current level
    std::iota(node_of.begin(), node_of.end(), 0);
    std::vector<int> part(n0);
    std::iota(part.begin(), part.end(), 0);

    for (int iter = 0; iter < o_.max_iterations; ++iter) {
      move_nodes(level, part);
      const int k = *std::max_element(part.begin(), part.end()) + 1;
      if (k == level.g.size()) break;
      std::vector<int> refined = refine(level, part);
      // Aggregate on the refined partition, seeded with the coarse one.
      const int nk = *std::max_element(refined.begin(), refined.end()) + 1;
      Level next;
      next.g.adj.resize(nk);
      next.g.self_loops.assign(nk, 0.0);
      next.node_weight.assign(nk, 0.0);
      std::vector<int> next_part(nk);
      for (int u = 0; u < level.g.size(); ++u) {
        const int cu = refined[u];
        next.node_weight[cu] += level.node_weight[u];
        next_part[cu] = part[u];
        if (static_cast<std::size_t>(u) < level.g.self_loops.size()) next.g.self_loops[cu] += level.g.self_loops[u];
        for (const auto& [v, w] : level.g.adj[u]) {
          if (v < u) continue;
          next.g.add_edge(cu, refined[v], w);
        }
      }
      for (auto& x : node_of) x = refined[x];
      level = std::move(next);
      part = relabel(next_part);
    }
    std::vector<int> out(n0);
    for (int u = 0; u < n0; ++u) out[u] = part[node_of[u]];
    return relabel(out);
  }

 private:
  double gain(double k_v_c, double kv, double K_c) const { return k_v_c - o_.resolution * kv * K_c / two_m_; }

  void move_nodes(const Level& L, std::vector<int>& part) {
    const int n = L.g.size();
    std::vector<double> K(n, 0.0);  // community totals (labels < n)
    for (int u = 0; u < n; ++u) K[part[u]] += L.node_weight[u];
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng_.shuffle(order);
    std::deque<int> queue(order.begin(), order.end());
    std::vector<char> queued(n, 1);
    std::vector<double> link(n, 0.0);
    std::vector<int> touched;
    while (!queue.empty()) {
      const int v = queue.front();
      queue.pop_front();
      queued[v] = 0;
      const int cur = part[v];
      const double kv = L.node_weight[v];
      K[cur] -= kv;
      touched.clear();
      for (const auto& [u, w] : L.g.adj[v]) {
        if (link[part[u]] == 0) touched.push_back(part[u]);
        link[part[u]] += w;
      }
      int best = cur;
      double best_gain = gain(link[cur], kv, K[cur]);
      std::sort(touched.begin(), touched.end());
      for (int c : touched) {
        const double g = gain(link[c], kv, K[c]);
        if (g > best_gain + 1e-12) {
          best_gain = g;
          best = c;
        }
      }
      // Moving out to an empty community scores 0.
      if (best_gain < -1e-12) {
        for (int c = 0; c < n; ++c) {
          if (K[c] == 0 && c != cur) {
            best = c;
            break;
          }
        }
        if (K[cur] == 0) best = cur;
      }
      for (int c : touched) link[c] = 0;
      link[cur] = 0;
      K[best] += kv;
      if (best != cur) {
        part[v] = best;
        for (const auto& [u, w] : L.g.adj[v]) {
          if (part[u] != best && !queued[u]) {
            queued[u] = 1;
            queue.push_back(u);
          }
        }
      }
    }
    part = relabel(part);
  }

  std::vector<int> refine(const Level& L, const std::vector<int>& part) {
    const int n = L.g.size();
    std::vector<int> refined(n);
    std::iota(refined.begin(), refined.end(), 0);
    std::vector<double> Kr(L.node_weight);  // refined community totals
    std::vector<char> singleton(n, 1);
    std::map<int, std::vector<int>> members;
    std::vector<double> Kc(n, 0.0);
    for (int u = 0; u < n; ++u) {
      members[part[u]].push_back(u);
      Kc[part[u]] += L.node_weight[u];
    }
    // weight from a refined community to the rest of its coarse community
    std::vector<double> ext(n, 0.0);
    for (int u = 0; u < n; ++u) {
      for (const auto& [v, w] : L.g.adj[u]) {
        if (part[v] == part[u]) ext[u] += w;
      }
    }
    for (auto& [c, nodes] : members) {
      std::vector<int> order = nodes;
      rng_.shuffle(order);
      for (int v : order) {
        if (!singleton[v]) continue;
        const double kv = L.node_weight[v];
        if (ext[refined[v]] < o_.resolution * kv * (Kc[c] - kv) / two_m_ - 1e-12) continue;
        std::map<int, double> link;
        for (const auto& [u, w] : L.g.adj[v]) {
          if (part[u] == c) link[refined[u]] += w;
        }
        std::vector<std::pair<int, double>> candidates{{refined[v], 0.0}};
        for (const auto& [t, w] : link) {
          if (t == refined[v]) continue;
          if (ext[t] < o_.resolution * Kr[t] * (Kc[c] - Kr[t]) / two_m_ - 1e-12) continue;
          const double g = gain(w, kv, Kr[t]);
          if (g >= 0) candidates.emplace_back(t, g / two_m_);
        }
        double top = 0;
        for (const auto& [t, g] : candidates) top = std::max(top, g);
        std::vector<double> weights;
        double total = 0;
        for (const auto& [t, g] : candidates) {
          weights.push_back(std::exp((g - top) / o_.randomness));
          total += weights.back();
        }
        double r = rng_.uniform() * total;
        std::size_t pick = 0;
        for (; pick + 1 < weights.size(); ++pick) {
          if (r < weights[pick]) break;
          r -= weights[pick];
        }
        const int target = candidates[pick].first;
        if (target == refined[v]) continue;
        // v joins target
        const int old = refined[v];
        double v_to_target = link[target];
        ext[target] = ext[target] + ext[old] - 2 * v_to_target;
        Kr[target] += kv;
        Kr[old] = 0;
        refined[v] = target;
        singleton[v] = 0;
        for (int u : nodes) {
          if (refined[u] == target) singleton[u] = 0;
        }
      }
    }
    return relabel(refined);
  }

  Rng rng_;
  LeidenOptions o_;
  double two_m_ = 0;
};

}  // namespace

std::vector<int> leiden(const WeightedGraph& g, std::uint64_t seed, const LeidenOptions& options) {
  return Leiden(seed, options).run(g);
}

namespace {

struct Node {
  std::vector<int> members;  // entity indices, sorted
  std::vector<Node> children;
};

WeightedGraph induced(const graph::PatientGraph& g, const std::vector<int>& members) {
  std::map<std::string, int> local;
  for (std::size_t i = 0; i < members.size(); ++i) local[g.entities[members[i]].id] = static_cast<int>(i);
  WeightedGraph w;
  w.adj.resize(members.size());
  for (const auto& r : g.relations) {
    auto a = local.find(r.src);
    auto b = local.find(r.dst);
    if (a != local.end() && b != local.end() && a->second != b->second) w.add_edge(a->second, b->second, 1.0);
  }
  return w;
}

std::vector<std::vector<int>> split(const graph::PatientGraph& g, const std::vector<int>& members, std::uint64_t seed,
                                    const LeidenOptions& o) {
  const auto labels = leiden(induced(g, members), seed, o);
  std::map<int, std::vector<int>> groups;
  for (std::size_t i = 0; i < members.size(); ++i) groups[labels[i]].push_back(members[i]);
  std::vector<std::vector<int>> out;
  for (auto& [k, v] : groups) {
    std::sort(v.begin(), v.end());
    out.push_back(std::move(v));
  }
  std::sort(out.begin(), out.end());
  return out;
}

void grow(const graph::PatientGraph& g, Node& node, std::uint64_t seed, const HierarchyOptions& o, int depth) {
  if (depth >= o.max_depth || node.members.size() <= o.max_community_size) return;
  auto parts = split(g, node.members, Digest().add(std::to_string(seed)).add(std::to_string(depth))
                                          .add(g.entities[node.members.front()].id).value(),
                     o.leiden);
  if (parts.size() <= 1) return;
  for (auto& p : parts) {
    node.children.push_back({std::move(p), {}});
    grow(g, node.children.back(), seed, o, depth + 1);
  }
}

int height(const Node& n) {
  int h = 0;
  for (const auto& c : n.children) h = std::max(h, 1 + height(c));
  return h;
}

// Partition at a depth below the root; leaves above it carry down.
void collect(const Node& n, int depth, int target, std::vector<const Node*>& out) {
  if (depth == target || n.children.empty()) {
    out.push_back(&n);
    return;
  }
  for (const auto& c : n.children) collect(c, depth + 1, target, out);
}

}  // namespace

std::vector<graph::Community> detect_communities(const graph::PatientGraph& g, std::uint64_t seed,
                                                 const HierarchyOptions& options) {
  std::vector<graph::Community> out;
  const int n = static_cast<int>(g.entities.size());
  if (n == 0) return out;
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);

  // Root holds the whole-graph partition as its children.
  Node root{all, {}};
  for (auto& p : split(g, all, seed, options.leiden)) {
    root.children.push_back({std::move(p), {}});
    grow(g, root.children.back(), seed, options, 1);
  }
  const int levels = height(root);  // >= 1
  for (int depth = 1; depth <= levels; ++depth) {
    std::vector<const Node*> nodes;
    collect(root, 0, depth, nodes);
    std::vector<std::vector<std::string>> parts;
    for (const auto* node : nodes) {
      std::vector<std::string> ids;
      for (int i : node->members) ids.push_back(g.entities[i].id);
      std::sort(ids.begin(), ids.end());
      parts.push_back(std::move(ids));
    }
    std::sort(parts.begin(), parts.end());
    const int level = levels - depth;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      out.push_back({"L" + std::to_string(level) + "C" + std::to_string(k), level, std::move(parts[k]), ""});
    }
  }
  std::sort(out.begin(), out.end(), [](const graph::Community& a, const graph::Community& b) {
    return std::tie(a.level, a.members) < std::tie(b.level, b.members);
  });
  return out;
}

std::string extractive_summary(const graph::PatientGraph& g, const graph::Community& c) {
  std::vector<std::string> names;
  for (const auto& id : c.members) {
    if (const auto* e = g.find(id)) {
      names.push_back(e->canonical_name + " (" + text::lower(graph::to_string(e->etype)) + ")");
    }
  }
  std::sort(names.begin(), names.end());
  return "Community " + c.id + ": " + text::join(names, "; ") + ".";
}

void summarize_communities(graph::PatientGraph& g, llm::Gateway* llm) {
  for (auto& c : g.communities) {
    if (!llm) {
      c.summary = extractive_summary(g, c);
      continue;
    }
    std::string items;
    for (const auto& id : c.members) {
      if (const auto* e = g.find(id)) items += "- " + graph::entity_text(*e) + "\n";
    }
    const auto prompt =
        prompts::render("summarize", {{"patient_id", g.patient_id}, {"community_id", c.id}, {"items", items}});
    llm::ChatRequest req;
    req.prompt_asset_id = prompt.asset_id;
    req.rendered_prompt = prompt.text;
    req.temperature = 0.0;
    req.max_tokens = 256;
    req.tags = {{"stage", "summarize"}, {"patient_id", g.patient_id}, {"community", c.id}};
    c.summary = text::trim(llm->complete(req));
  }
}

}  // namespace faithcheck::community
