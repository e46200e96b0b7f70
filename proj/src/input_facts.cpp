#include "nsl/input_facts.hpp"

namespace nsl {

InputFactTable::InputFactTable(const Program& program) {
  for (std::size_t r = 0; r < program.relations.size(); ++r) {
    const RelationDecl& d = program.relations[r];
    relation_names_.push_back(d.name);
    if (!d.is_input()) continue;

    std::map<Tuple, std::size_t> group_by_key;
    const auto tuples = d.facts ? *d.facts : d.domain_tuples();
    for (const Tuple& t : tuples) {
      const auto id = static_cast<FactId>(facts_.size());
      facts_.push_back({r, t});
      index_.emplace(std::pair{r, t}, id);
      std::int32_t g = kNoGroup;
      if (d.group_by) {
        Tuple key;
        for (auto a : *d.group_by) key.push_back(t.at(a));
        auto [it, fresh] = group_by_key.emplace(key, layout_.groups.size());
        if (fresh) layout_.groups.push_back({layout_.groups.size(), r, key, {}});
        layout_.groups[it->second].members.push_back(id);
        g = static_cast<std::int32_t>(it->second);
      }
      layout_.group_of.push_back(g);
    }
  }
}

std::optional<FactId> InputFactTable::find(std::size_t relation, const Tuple& args) const {
  auto it = index_.find({relation, args});
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string InputFactTable::name(FactId f) const {
  const auto& fact = facts_.at(f);
  return relation_names_[fact.relation] + tuple_to_string(fact.args);
}

std::vector<std::string> InputFactTable::names() const {
  std::vector<std::string> out;
  out.reserve(facts_.size());
  for (FactId f = 0; f < facts_.size(); ++f) out.push_back(name(f));
  return out;
}

std::vector<FactId> InputFactTable::facts_of(std::size_t relation) const {
  std::vector<FactId> out;
  for (FactId f = 0; f < facts_.size(); ++f) {
    if (facts_[f].relation == relation) out.push_back(f);
  }
  return out;
}

}  // namespace nsl
