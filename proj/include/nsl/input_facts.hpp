// Grounded input facts of a program and their exclusion groups.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nsl/logic.hpp"

namespace nsl {

using FactId = std::uint32_t;
inline constexpr std::int32_t kNoGroup = -1;

struct ExclusionGroup {
  std::size_t id = 0;
  std::size_t relation = 0;
  Tuple key;  // values of the group-by arguments
  std::vector<FactId> members;
};

/// Which facts form one categorical variable. Exactly one member of each
/// group holds in any world.
struct ExclusionLayout {
  std::vector<std::int32_t> group_of;  // per fact, kNoGroup if independent
  std::vector<ExclusionGroup> groups;

  std::size_t fact_count() const { return group_of.size(); }
  bool grouped(FactId f) const { return group_of[f] != kNoGroup; }
};

struct InputFact {
  std::size_t relation = 0;
  Tuple args;
};

/// Input facts numbered in grounding order: input relations in declaration
/// order, tuples in listed order (or row-major domain order).
class InputFactTable {
 public:
  explicit InputFactTable(const Program& program);

  std::size_t size() const { return facts_.size(); }
  const InputFact& operator[](FactId f) const { return facts_[f]; }
  const std::vector<InputFact>& facts() const { return facts_; }
  std::optional<FactId> find(std::size_t relation, const Tuple& args) const;
  std::string name(FactId f) const;
  std::vector<std::string> names() const;
  const ExclusionLayout& layout() const { return layout_; }
  /// Facts of one input relation, in grounding order.
  std::vector<FactId> facts_of(std::size_t relation) const;

 private:
  std::vector<InputFact> facts_;
  std::vector<std::string> relation_names_;
  std::map<std::pair<std::size_t, Tuple>, FactId> index_;
  ExclusionLayout layout_;
};

}  // namespace nsl
