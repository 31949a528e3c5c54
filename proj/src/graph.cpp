#include "faithcheck/graph.hpp"

#include <algorithm>
#include <queue>
#include <set>

#include "faithcheck/assets.hpp"
#include "faithcheck/error.hpp"
#include "faithcheck/ids.hpp"
#include "faithcheck/llm.hpp"
#include "faithcheck/prompts.hpp"
#include "faithcheck/structured.hpp"
#include "faithcheck/text.hpp"

namespace faithcheck::graph {

namespace {

constexpr std::pair<EntityType, std::string_view> kEntityNames[] = {
    {EntityType::Patient, "PATIENT"},       {EntityType::Diagnosis, "DIAGNOSIS"},
    {EntityType::Medication, "MEDICATION"}, {EntityType::LabTest, "LAB_TEST"},
    {EntityType::LabResult, "LAB_RESULT"},  {EntityType::VitalSign, "VITAL_SIGN"},
    {EntityType::Symptom, "SYMPTOM"},       {EntityType::Procedure, "PROCEDURE"},
    {EntityType::Department, "DEPARTMENT"},
};

constexpr std::pair<RelationType, std::string_view> kRelationNames[] = {
    {RelationType::HasDiagnosis, "has_diagnosis"},
    {RelationType::Prescribed, "prescribed"},
    {RelationType::Shows, "shows"},
    {RelationType::Underwent, "underwent"},
    {RelationType::HasVitalSign, "has_vital_sign"},
    {RelationType::TestedBy, "tested_by"},
    {RelationType::ResultOf, "result_of"},
    {RelationType::TreatedIn, "treated_in"},
    {RelationType::Indicates, "indicates"},
    {RelationType::ContraindicatedWith, "contraindicated_with"},
};

void merge_provenance(std::vector<Provenance>& into, const std::vector<Provenance>& from) {
  into.insert(into.end(), from.begin(), from.end());
  std::sort(into.begin(), into.end());
  into.erase(std::unique(into.begin(), into.end()), into.end());
}

void merge_attributes(Entity& into, const std::map<std::string, std::string>& attrs,
                      const std::vector<std::string>& conflicts) {
  for (const auto& [k, v] : attrs) {
    auto [it, inserted] = into.attributes.emplace(k, v);
    if (!inserted && it->second != v) {
      const std::string c = k + ": " + std::min(it->second, v) + " | " + std::max(it->second, v);
      into.attribute_conflicts.push_back(c);
    }
  }
  into.attribute_conflicts.insert(into.attribute_conflicts.end(), conflicts.begin(), conflicts.end());
  std::sort(into.attribute_conflicts.begin(), into.attribute_conflicts.end());
  into.attribute_conflicts.erase(std::unique(into.attribute_conflicts.begin(), into.attribute_conflicts.end()),
                                 into.attribute_conflicts.end());
}

bool relation_less(const Relation& a, const Relation& b) {
  return std::tie(a.src, a.dst, a.rtype) < std::tie(b.src, b.dst, b.rtype);
}

// Replaces entities according to old id -> replacement entity. Replacement
// entities are merged with each other (and with survivors sharing their id);
// relations are re-pointed, self-loops dropped, duplicates folded.
void apply_merge(PatientGraph& g, const std::map<std::string, Entity>& replacement_for) {
  if (replacement_for.empty()) return;
  std::map<std::string, Entity> merged;
  std::vector<Entity> kept;
  for (auto& e : g.entities) {
    auto it = replacement_for.find(e.id);
    if (it == replacement_for.end()) {
      kept.push_back(std::move(e));
      continue;
    }
    const Entity& r = it->second;
    auto [slot, fresh] = merged.emplace(r.id, r);
    if (!fresh) {
      merge_attributes(slot->second, r.attributes, r.attribute_conflicts);
      merge_provenance(slot->second.provenance, r.provenance);
    }
  }
  for (auto& [id, e] : merged) {
    auto it = std::find_if(kept.begin(), kept.end(), [&](const Entity& k) { return k.id == id; });
    if (it != kept.end()) {
      merge_attributes(*it, e.attributes, e.attribute_conflicts);
      merge_provenance(it->provenance, e.provenance);
    } else {
      kept.push_back(std::move(e));
    }
  }
  g.entities = std::move(kept);
  auto remap = [&](const std::string& id) {
    auto it = replacement_for.find(id);
    return it == replacement_for.end() ? id : it->second.id;
  };
  for (auto& r : g.relations) {
    r.src = remap(r.src);
    r.dst = remap(r.dst);
  }
  g.relations.erase(std::remove_if(g.relations.begin(), g.relations.end(),
                                   [](const Relation& r) { return r.src == r.dst; }),
                    g.relations.end());
  g.canonicalize_order();
}

Entity make_entity(const std::string& patient_id, EntityType etype, const std::string& name) {
  Entity e;
  e.etype = etype;
  e.canonical_name = name;
  e.id = entity_id(patient_id, to_string(etype), name);
  return e;
}

}  // namespace

std::string_view to_string(EntityType t) {
  for (const auto& [k, v] : kEntityNames) {
    if (k == t) return v;
  }
  return "UNKNOWN";
}

std::string_view to_string(RelationType t) {
  for (const auto& [k, v] : kRelationNames) {
    if (k == t) return v;
  }
  return "unknown";
}

std::optional<EntityType> parse_entity_type(std::string_view s) {
  for (const auto& [k, v] : kEntityNames) {
    if (v == s) return k;
  }
  return std::nullopt;
}

std::optional<RelationType> parse_relation_type(std::string_view s) {
  for (const auto& [k, v] : kRelationNames) {
    if (v == s) return k;
  }
  return std::nullopt;
}

NormalizationConfig NormalizationConfig::from_json(const json& j) {
  NormalizationConfig c;
  c.version = j.value("version", "");
  if (j.contains("panels")) {
    for (auto it = j["panels"].begin(); it != j["panels"].end(); ++it) {
      c.panel_of[text::fold(it.key())] = it.key();
      for (const auto& member : it.value()) c.panel_of[text::fold(member.get<std::string>())] = it.key();
    }
  }
  if (j.contains("synonyms")) {
    for (auto it = j["synonyms"].begin(); it != j["synonyms"].end(); ++it) {
      auto etype = parse_entity_type(it.key());
      if (!etype) fail(ErrorKind::Config, "unknown entity type in synonym map: " + it.key());
      auto& table = c.synonyms[*etype];
      for (auto s = it.value().begin(); s != it.value().end(); ++s) {
        table[text::fold(s.key())] = s.value().get<std::string>();
      }
    }
  }
  return c;
}

const NormalizationConfig& NormalizationConfig::defaults() {
  static const NormalizationConfig c = from_json(json::parse(assets::get("normalization.json")));
  return c;
}

// ---------------------------------------------------------------- container

std::size_t PatientGraph::index_of(std::string_view id) const {
  auto it = std::lower_bound(entities.begin(), entities.end(), id,
                             [](const Entity& e, std::string_view key) { return e.id < key; });
  if (it == entities.end() || it->id != id) return static_cast<std::size_t>(-1);
  return static_cast<std::size_t>(it - entities.begin());
}

const Entity* PatientGraph::find(std::string_view id) const {
  const auto i = index_of(id);
  return i == static_cast<std::size_t>(-1) ? nullptr : &entities[i];
}

std::string PatientGraph::add_entity(EntityType etype, const std::string& name,
                                     std::map<std::string, std::string> attributes, Provenance prov) {
  const std::string clean = text::trim(name);
  if (clean.empty()) fail(ErrorKind::InvalidArgument, "entity name must be non-empty");
  Entity e = make_entity(patient_id, etype, clean);
  auto it = std::lower_bound(entities.begin(), entities.end(), e.id,
                             [](const Entity& x, const std::string& key) { return x.id < key; });
  if (it != entities.end() && it->id == e.id) {
    merge_attributes(*it, attributes, {});
    merge_provenance(it->provenance, {prov});
    return it->id;
  }
  e.attributes = std::move(attributes);
  e.provenance.push_back(std::move(prov));
  const std::string id = e.id;
  entities.insert(it, std::move(e));
  return id;
}

void PatientGraph::add_relation(const std::string& src, const std::string& dst, RelationType rtype, Provenance prov) {
  if (!find(src) || !find(dst)) fail(ErrorKind::InvalidArgument, "relation endpoint not in graph");
  if (src == dst) return;
  Relation r{src, dst, rtype, {std::move(prov)}};
  auto it = std::lower_bound(relations.begin(), relations.end(), r, relation_less);
  if (it != relations.end() && it->src == src && it->dst == dst && it->rtype == rtype) {
    merge_provenance(it->provenance, r.provenance);
    return;
  }
  relations.insert(it, std::move(r));
}

void PatientGraph::canonicalize_order() {
  std::sort(entities.begin(), entities.end(), [](const Entity& a, const Entity& b) { return a.id < b.id; });
  std::sort(relations.begin(), relations.end(), relation_less);
  std::vector<Relation> unique;
  for (auto& r : relations) {
    if (!unique.empty() && unique.back().src == r.src && unique.back().dst == r.dst && unique.back().rtype == r.rtype) {
      merge_provenance(unique.back().provenance, r.provenance);
    } else {
      unique.push_back(std::move(r));
    }
  }
  relations = std::move(unique);
}

std::vector<std::vector<std::size_t>> PatientGraph::adjacency() const {
  std::vector<std::vector<std::size_t>> adj(entities.size());
  for (const auto& r : relations) {
    const auto a = index_of(r.src);
    const auto b = index_of(r.dst);
    if (a == static_cast<std::size_t>(-1) || b == static_cast<std::size_t>(-1) || a == b) continue;
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  for (auto& n : adj) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  return adj;
}

// ------------------------------------------------------------- construction

PatientGraph table_graph(const ehr::PatientRecord& rec) {
  PatientGraph g;
  g.patient_id = rec.patient_id;
  const std::string p = g.add_entity(EntityType::Patient, "Patient", {}, {"record", rec.patient_id});

  for (const auto& d : rec.diagnoses) {
    const std::string name = d.label.empty() ? d.code : d.label;
    const auto id = g.add_entity(EntityType::Diagnosis, name,
                                 {{"icd_code", d.code}, {"icd_version", d.icd_version}, {"seq", std::to_string(d.seq)}},
                                 {ehr::kDiagnosisFile, "seq " + std::to_string(d.seq)});
    g.add_relation(p, id, RelationType::HasDiagnosis, {ehr::kDiagnosisFile, "seq " + std::to_string(d.seq)});
  }

  for (const auto& v : rec.triage) {
    const Provenance prov{ehr::kTriageFile, "stay " + v.stay_id};
    auto vital = [&](const char* name, const auto& value, const char* unit) {
      if (!value) return;
      const auto id = g.add_entity(EntityType::VitalSign, name,
                                   {{"value", text::format_double(static_cast<double>(*value))}, {"unit", unit}}, prov);
      g.add_relation(p, id, RelationType::HasVitalSign, prov);
    };
    vital("Temperature", v.temperature, "F");
    vital("Heart rate", v.heart_rate, "bpm");
    vital("Respiratory rate", v.respiratory_rate, "/min");
    vital("SpO2", v.spo2, "%");
    if (v.sbp || v.dbp) {
      std::map<std::string, std::string> attrs{{"unit", "mmHg"}};
      if (v.sbp) attrs["systolic"] = text::format_double(*v.sbp);
      if (v.dbp) attrs["diastolic"] = text::format_double(*v.dbp);
      if (v.sbp && v.dbp) attrs["value"] = attrs["systolic"] + "/" + attrs["diastolic"];
      const auto id = g.add_entity(EntityType::VitalSign, "Blood pressure", std::move(attrs), prov);
      g.add_relation(p, id, RelationType::HasVitalSign, prov);
    }
    vital("Pain score", v.pain, "/10");
    if (!v.chief_complaint.empty()) {
      const auto id = g.add_entity(EntityType::Symptom, v.chief_complaint, {{"role", "chief complaint"}}, prov);
      g.add_relation(p, id, RelationType::Shows, prov);
    }
  }

  for (const auto& s : rec.ed_stays) {
    const Provenance prov{ehr::kEdStaysFile, "stay " + s.stay_id};
    std::map<std::string, std::string> attrs{
        {"in_time", s.in_time}, {"out_time", s.out_time}, {"disposition", s.disposition}};
    for (const auto& v : rec.triage) {
      if (v.stay_id == s.stay_id && v.acuity) attrs["acuity"] = std::to_string(*v.acuity);
    }
    const auto id = g.add_entity(EntityType::Department, "Emergency Department", std::move(attrs), prov);
    g.add_relation(p, id, RelationType::TreatedIn, prov);
  }

  for (std::size_t i = 0; i < rec.medications.size(); ++i) {
    const auto& m = rec.medications[i];
    const Provenance prov{ehr::kMedicationsFile, "row " + std::to_string(i + 1)};
    std::map<std::string, std::string> attrs;
    if (!m.dose.empty()) attrs["dose"] = m.dose;
    if (!m.route.empty()) attrs["route"] = m.route;
    if (!m.frequency.empty()) attrs["frequency"] = m.frequency;
    const auto id = g.add_entity(EntityType::Medication, m.drug, std::move(attrs), prov);
    g.add_relation(p, id, RelationType::Prescribed, prov);
  }

  for (std::size_t i = 0; i < rec.labs.size(); ++i) {
    const auto& l = rec.labs[i];
    const Provenance prov{ehr::kLabsFile, "row " + std::to_string(i + 1)};
    const auto test = g.add_entity(EntityType::LabTest, l.test, {}, prov);
    g.add_relation(p, test, RelationType::TestedBy, prov);
    const std::string name = text::trim(l.test + " " + l.value + " " + l.unit) + " @ " + l.charttime;
    const auto result = g.add_entity(EntityType::LabResult, name,
                                     {{"test", l.test}, {"value", l.value}, {"unit", l.unit}, {"charttime", l.charttime}},
                                     prov);
    g.add_relation(result, test, RelationType::ResultOf, prov);
  }
  return g;
}

const structured::Schema& extraction_schema() {
  static const structured::Schema schema = [] {
    std::vector<std::string> etypes, rtypes;
    for (auto t : kAllEntityTypes) etypes.emplace_back(to_string(t));
    for (auto t : kAllRelationTypes) rtypes.emplace_back(to_string(t));
    using structured::FieldKind;
    auto entity = std::make_shared<structured::Schema>();
    entity->name = "extracted_entity";
    entity->version = "extract/1";
    entity->fields = {
        {.name = "type", .kind = FieldKind::Enum, .allowed = etypes},
        {.name = "name", .kind = FieldKind::String, .non_empty = true},
        {.name = "attributes", .kind = FieldKind::Object, .required = false},
    };
    auto relation = std::make_shared<structured::Schema>();
    relation->name = "extracted_relation";
    relation->version = "extract/1";
    relation->fields = {
        {.name = "src", .kind = FieldKind::String, .non_empty = true},
        {.name = "src_type", .kind = FieldKind::Enum, .allowed = etypes},
        {.name = "dst", .kind = FieldKind::String, .non_empty = true},
        {.name = "dst_type", .kind = FieldKind::Enum, .allowed = etypes},
        {.name = "type", .kind = FieldKind::Enum, .allowed = rtypes},
    };
    structured::Schema s;
    s.name = "graph_extraction";
    s.version = "extract/1";
    s.fields = {
        {.name = "entities", .kind = FieldKind::List, .item_kind = FieldKind::Object, .nested = entity},
        {.name = "relations", .kind = FieldKind::List, .item_kind = FieldKind::Object, .nested = relation},
    };
    return s;
  }();
  return schema;
}

namespace {

std::string attr_string(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

void extract_source(PatientGraph& g, llm::Gateway& gw, const std::string& source, const std::string& body,
                    int attempts) {
  const auto prompt = prompts::render("extract", {{"patient_id", g.patient_id}, {"source", source}, {"text", body}});
  auto next = [&](int attempt) {
    llm::ChatRequest req;
    req.prompt_asset_id = prompt.asset_id;
    req.rendered_prompt = prompt.text;
    req.temperature = 0.0;
    req.max_tokens = 4096;
    req.tags = {{"stage", "extract"}, {"patient_id", g.patient_id}, {"source", source},
                {"attempt", std::to_string(attempt)}};
    return gw.complete(req);
  };
  const auto r = structured::accept_or_retry(next, extraction_schema(), nullptr, attempts);
  if (!r.accepted) {
    std::string why = r.violations.empty() ? "invalid output" : r.violations.front().message;
    fail(ErrorKind::Schema, "extraction output for " + source + " unusable after " + std::to_string(r.attempts) +
                                " attempts: " + why);
  }
  const json& doc = *r.value;
  const std::string src_tag = "llm:" + source;
  for (const auto& e : doc["entities"]) {
    std::map<std::string, std::string> attrs;
    if (e.contains("attributes") && e["attributes"].is_object()) {
      for (auto it = e["attributes"].begin(); it != e["attributes"].end(); ++it) attrs[it.key()] = attr_string(it.value());
    }
    const auto etype = *parse_entity_type(e["type"].get<std::string>());
    const auto name = e["name"].get<std::string>();
    g.add_entity(etype, name, std::move(attrs), {src_tag, text::trim(name)});
  }
  for (const auto& rel : doc["relations"]) {
    const auto src = entity_id(g.patient_id, rel["src_type"].get<std::string>(), text::trim(rel["src"].get<std::string>()));
    const auto dst = entity_id(g.patient_id, rel["dst_type"].get<std::string>(), text::trim(rel["dst"].get<std::string>()));
    if (!g.find(src) || !g.find(dst)) continue;  // endpoint not declared
    g.add_relation(src, dst, *parse_relation_type(rel["type"].get<std::string>()),
                   {src_tag, rel["src"].get<std::string>() + " -> " + rel["dst"].get<std::string>()});
  }
}

}  // namespace

PatientGraph extract_raw_graph(const ehr::PatientRecord& record, llm::Gateway* llm, int attempts) {
  PatientGraph g = table_graph(record);
  if (!llm) return g;
  if (!text::trim(record.discharge_text).empty()) extract_source(g, *llm, "discharge", record.discharge_text, attempts);
  for (std::size_t i = 0; i < record.radiology_reports.size(); ++i) {
    extract_source(g, *llm, "radiology#" + std::to_string(i), record.radiology_reports[i], attempts);
  }
  return g;
}

// ------------------------------------------------------------ normalization

void normalize_lab_panels(PatientGraph& g, const NormalizationConfig& cfg) {
  std::set<std::string> panel_names;
  for (const auto& [k, v] : cfg.panel_of) panel_names.insert(v);

  std::map<std::string, Entity> replace;
  std::map<std::string, std::vector<std::string>> members_of_panel;
  for (const auto& e : g.entities) {
    if (e.etype != EntityType::LabTest) continue;
    auto it = cfg.panel_of.find(text::fold(e.canonical_name));
    if (it == cfg.panel_of.end()) continue;
    Entity panel = make_entity(g.patient_id, EntityType::LabTest, it->second);
    panel.attributes = e.attributes;
    panel.attribute_conflicts = e.attribute_conflicts;
    panel.provenance = e.provenance;
    if (e.canonical_name != it->second) members_of_panel[panel.id].push_back(e.canonical_name);
    replace.emplace(e.id, std::move(panel));
  }
  apply_merge(g, replace);
  for (auto& e : g.entities) {
    auto it = members_of_panel.find(e.id);
    if (it == members_of_panel.end()) continue;
    std::set<std::string> params(it->second.begin(), it->second.end());
    if (auto old = e.attributes.find("parameters"); old != e.attributes.end()) {
      for (const auto& p : text::split(old->second, ',')) params.insert(text::trim(p));
    }
    std::vector<std::string> sorted(params.begin(), params.end());
    e.attributes["parameters"] = text::join(sorted, ", ");
  }

  // Parameter-level results collapse to one panel result per charttime.
  std::map<std::string, std::string> panel_of_result;
  for (const auto& r : g.relations) {
    if (r.rtype != RelationType::ResultOf) continue;
    const Entity* src = g.find(r.src);
    const Entity* dst = g.find(r.dst);
    if (src && dst && src->etype == EntityType::LabResult && dst->etype == EntityType::LabTest &&
        panel_names.count(dst->canonical_name)) {
      panel_of_result.emplace(r.src, dst->canonical_name);
    }
  }
  replace.clear();
  for (const auto& e : g.entities) {
    auto pit = panel_of_result.find(e.id);
    if (e.etype != EntityType::LabResult || pit == panel_of_result.end()) continue;
    auto ct = e.attributes.find("charttime");
    const std::string when = ct == e.attributes.end() ? "" : ct->second;
    const std::string name = pit->second + (when.empty() ? std::string(" result") : " @ " + when);
    Entity merged = make_entity(g.patient_id, EntityType::LabResult, name);
    if (!when.empty()) merged.attributes["charttime"] = when;
    if (auto t = e.attributes.find("test"); t != e.attributes.end()) {
      std::string value = e.attributes.count("value") ? e.attributes.at("value") : "";
      if (e.attributes.count("unit") && !e.attributes.at("unit").empty()) value += " " + e.attributes.at("unit");
      merged.attributes[t->second] = text::trim(value);
    } else {
      for (const auto& [k, v] : e.attributes) merged.attributes.emplace(k, v);
    }
    merged.attribute_conflicts = e.attribute_conflicts;
    merged.provenance = e.provenance;
    replace.emplace(e.id, std::move(merged));
  }
  apply_merge(g, replace);
}

namespace {

std::optional<RelationType> patient_link_for(EntityType t) {
  switch (t) {
    case EntityType::Diagnosis: return RelationType::HasDiagnosis;
    case EntityType::Medication: return RelationType::Prescribed;
    case EntityType::LabTest: return RelationType::TestedBy;
    case EntityType::VitalSign: return RelationType::HasVitalSign;
    case EntityType::Symptom: return RelationType::Shows;
    case EntityType::Procedure: return RelationType::Underwent;
    case EntityType::Department: return RelationType::TreatedIn;
    default: return std::nullopt;
  }
}

std::vector<int> component_labels(const PatientGraph& g) {
  const auto adj = g.adjacency();
  std::vector<int> label(g.entities.size(), -1);
  int next = 0;
  for (std::size_t s = 0; s < label.size(); ++s) {
    if (label[s] >= 0) continue;
    std::queue<std::size_t> q;
    q.push(s);
    label[s] = next;
    while (!q.empty()) {
      const auto u = q.front();
      q.pop();
      for (auto v : adj[u]) {
        if (label[v] < 0) {
          label[v] = next;
          q.push(v);
        }
      }
    }
    ++next;
  }
  return label;
}

}  // namespace

void enforce_patient_uniqueness(PatientGraph& g) {
  std::map<std::string, Entity> replace;
  Entity patient = make_entity(g.patient_id, EntityType::Patient, "Patient");
  for (const auto& e : g.entities) {
    if (e.etype != EntityType::Patient) continue;
    Entity r = patient;
    r.attributes = e.attributes;
    r.attribute_conflicts = e.attribute_conflicts;
    r.provenance = e.provenance;
    replace.emplace(e.id, std::move(r));
  }
  if (replace.empty()) fail(ErrorKind::NoPatientEntity, "graph for " + g.patient_id + " has no PATIENT entity");
  apply_merge(g, replace);

  const Provenance link{"normalize:patient", "link"};
  std::set<std::string> direct;
  for (const auto& r : g.relations) {
    if (r.src == patient.id) direct.insert(r.dst);
    if (r.dst == patient.id) direct.insert(r.src);
  }
  std::vector<std::pair<std::string, RelationType>> to_link;
  for (const auto& e : g.entities) {
    auto rel = patient_link_for(e.etype);
    if (rel && !direct.count(e.id)) to_link.emplace_back(e.id, *rel);
  }
  for (const auto& [id, rel] : to_link) g.add_relation(patient.id, id, rel, link);

  // Whatever is still detached (results without a test) hangs off the
  // patient through its smallest-id member.
  const auto labels = component_labels(g);
  const int patient_label = labels[g.index_of(patient.id)];
  std::set<int> anchored{patient_label};
  std::vector<std::string> anchors;
  for (std::size_t i = 0; i < g.entities.size(); ++i) {
    if (anchored.insert(labels[i]).second) anchors.push_back(g.entities[i].id);
  }
  for (const auto& id : anchors) {
    const auto rel = patient_link_for(g.find(id)->etype).value_or(RelationType::TestedBy);
    g.add_relation(patient.id, id, rel, {"normalize:patient", "anchor"});
  }
}

namespace {

struct CanonicalKey {
  std::string key;
  std::optional<std::string> synonym_target;
};

CanonicalKey canonical_key(const Entity& e, const NormalizationConfig& cfg) {
  const std::string folded = text::fold(e.canonical_name);
  auto table = cfg.synonyms.find(e.etype);
  if (table != cfg.synonyms.end()) {
    auto it = table->second.find(folded);
    if (it != table->second.end()) return {text::fold(it->second), it->second};
  }
  return {folded, std::nullopt};
}

bool from_table(const Entity& e) {
  return std::any_of(e.provenance.begin(), e.provenance.end(), [](const Provenance& p) {
    return p.source == "record" || (p.source.size() > 4 && p.source.substr(p.source.size() - 4) == ".csv");
  });
}

}  // namespace

void canonicalize_terminology(PatientGraph& g, const NormalizationConfig& cfg) {
  std::map<std::pair<EntityType, std::string>, std::vector<const Entity*>> groups;
  std::map<std::pair<EntityType, std::string>, std::string> target;
  for (const auto& e : g.entities) {
    if (e.etype == EntityType::Patient) continue;
    const auto k = canonical_key(e, cfg);
    groups[{e.etype, k.key}].push_back(&e);
    if (k.synonym_target) target[{e.etype, k.key}] = *k.synonym_target;
  }
  std::map<std::string, Entity> replace;
  for (const auto& [key, members] : groups) {
    std::string name;
    if (auto t = target.find(key); t != target.end()) {
      name = t->second;
    } else {
      // Same folded form: keep the table spelling, else the smallest.
      std::vector<std::string> table_names, all_names;
      for (const auto* m : members) {
        all_names.push_back(m->canonical_name);
        if (from_table(*m)) table_names.push_back(m->canonical_name);
      }
      const auto& pool = table_names.empty() ? all_names : table_names;
      name = *std::min_element(pool.begin(), pool.end());
    }
    if (members.size() == 1 && members.front()->canonical_name == name) continue;
    for (const auto* m : members) {
      Entity r = make_entity(g.patient_id, key.first, name);
      r.attributes = m->attributes;
      r.attribute_conflicts = m->attribute_conflicts;
      r.provenance = m->provenance;
      if (m->canonical_name != name) r.provenance.push_back({"normalize:synonym", m->canonical_name});
      replace.emplace(m->id, std::move(r));
    }
  }
  apply_merge(g, replace);
}

void normalize(PatientGraph& g, const NormalizationConfig& cfg) {
  normalize_lab_panels(g, cfg);
  enforce_patient_uniqueness(g);
  canonicalize_terminology(g, cfg);
}

std::size_t count_components(const PatientGraph& g) {
  const auto labels = component_labels(g);
  return labels.empty() ? 0 : static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end()) + 1);
}

QualityReport quality_report(const PatientGraph& g, const NormalizationConfig& cfg) {
  QualityReport q;
  q.total_entities = g.entities.size();
  std::map<std::pair<EntityType, std::string>, std::size_t> groups;
  for (const auto& e : g.entities) {
    if (e.etype == EntityType::LabTest) ++q.lab_test_entities;
    if (e.etype == EntityType::Patient) {
      ++q.patient_entities;
      continue;
    }
    ++groups[{e.etype, canonical_key(e, cfg).key}];
  }
  for (const auto& [k, n] : groups) q.duplicate_entities += n - 1;
  q.connected_components = count_components(g);
  return q;
}

std::string entity_text(const Entity& e) {
  std::string out = e.canonical_name;
  for (const auto& [k, v] : e.attributes) {
    if (k == "parameters" || k == "seq") continue;
    out += " " + k + " " + v;
  }
  return out;
}

// ------------------------------------------------------------ serialization

namespace {

json prov_json(const std::vector<Provenance>& ps) {
  json a = json::array();
  for (const auto& p : ps) a.push_back({{"source", p.source}, {"ref", p.ref}});
  return a;
}

std::vector<Provenance> prov_from(const json& a) {
  std::vector<Provenance> out;
  for (const auto& p : a) out.push_back({p.at("source").get<std::string>(), p.at("ref").get<std::string>()});
  return out;
}

json quality_json(const QualityReport& q) {
  return {{"total_entities", q.total_entities},       {"lab_test_entities", q.lab_test_entities},
          {"patient_entities", q.patient_entities},   {"duplicate_entities", q.duplicate_entities},
          {"connected_components", q.connected_components}, {"build_seconds", q.build_seconds}};
}

QualityReport quality_from(const json& j) {
  QualityReport q;
  q.total_entities = j.at("total_entities").get<std::size_t>();
  q.lab_test_entities = j.at("lab_test_entities").get<std::size_t>();
  q.patient_entities = j.at("patient_entities").get<std::size_t>();
  q.duplicate_entities = j.at("duplicate_entities").get<std::size_t>();
  q.connected_components = j.at("connected_components").get<std::size_t>();
  q.build_seconds = j.value("build_seconds", 0.0);
  return q;
}

}  // namespace

json to_json(const PatientGraph& g) {
  json j{{"graph_schema_version", kGraphSchemaVersion}, {"patient_id", g.patient_id}};
  j["entities"] = json::array();
  for (const auto& e : g.entities) {
    json ej{{"id", e.id}, {"type", std::string(to_string(e.etype))}, {"name", e.canonical_name},
            {"attributes", e.attributes}, {"provenance", prov_json(e.provenance)}};
    if (!e.attribute_conflicts.empty()) ej["attribute_conflicts"] = e.attribute_conflicts;
    j["entities"].push_back(std::move(ej));
  }
  j["relations"] = json::array();
  for (const auto& r : g.relations) {
    j["relations"].push_back({{"src", r.src}, {"dst", r.dst}, {"type", std::string(to_string(r.rtype))},
                              {"provenance", prov_json(r.provenance)}});
  }
  j["communities"] = json::array();
  for (const auto& c : g.communities) {
    j["communities"].push_back({{"id", c.id}, {"level", c.level}, {"members", c.members}, {"summary", c.summary}});
  }
  if (g.quality_before) j["quality_before"] = quality_json(*g.quality_before);
  if (g.quality) j["quality"] = quality_json(*g.quality);
  return j;
}

PatientGraph from_json(const json& j) {
  if (j.value("graph_schema_version", "") != kGraphSchemaVersion) {
    fail(ErrorKind::Config, "unsupported graph_schema_version: " + j.value("graph_schema_version", std::string("?")));
  }
  PatientGraph g;
  g.patient_id = j.at("patient_id").get<std::string>();
  for (const auto& ej : j.at("entities")) {
    Entity e;
    e.id = ej.at("id").get<std::string>();
    auto t = parse_entity_type(ej.at("type").get<std::string>());
    if (!t) fail(ErrorKind::Config, "unknown entity type " + ej.at("type").dump());
    e.etype = *t;
    e.canonical_name = ej.at("name").get<std::string>();
    e.attributes = ej.value("attributes", std::map<std::string, std::string>{});
    e.attribute_conflicts = ej.value("attribute_conflicts", std::vector<std::string>{});
    e.provenance = prov_from(ej.value("provenance", json::array()));
    g.entities.push_back(std::move(e));
  }
  for (const auto& rj : j.at("relations")) {
    auto t = parse_relation_type(rj.at("type").get<std::string>());
    if (!t) fail(ErrorKind::Config, "unknown relation type " + rj.at("type").dump());
    g.relations.push_back({rj.at("src").get<std::string>(), rj.at("dst").get<std::string>(), *t,
                           prov_from(rj.value("provenance", json::array()))});
  }
  for (const auto& cj : j.value("communities", json::array())) {
    g.communities.push_back({cj.at("id").get<std::string>(), cj.at("level").get<int>(),
                             cj.at("members").get<std::vector<std::string>>(), cj.value("summary", "")});
  }
  if (j.contains("quality_before")) g.quality_before = quality_from(j["quality_before"]);
  if (j.contains("quality")) g.quality = quality_from(j["quality"]);
  g.canonicalize_order();
  for (const auto& r : g.relations) {
    if (!g.find(r.src) || !g.find(r.dst)) fail(ErrorKind::Config, "relation endpoint missing from graph document");
  }
  return g;
}

PatientGraph load(const std::string& path) {
  try {
    return from_json(json::parse(text::read_file(path)));
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, path + ": " + e.what());
  }
}

void save(const PatientGraph& g, const std::string& path) { text::write_file(path, to_json(g).dump(2) + "\n"); }

}  // namespace faithcheck::graph
