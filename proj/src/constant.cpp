#include "nsl/logic.hpp"

#include <deque>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <unordered_map>

namespace nsl {
namespace {

class SymbolTable {
 public:
  std::int64_t intern(std::string_view name) {
    {
      std::shared_lock lock(mutex_);
      if (auto it = ids_.find(std::string(name)); it != ids_.end()) return it->second;
    }
    std::unique_lock lock(mutex_);
    auto [it, inserted] = ids_.emplace(std::string(name), static_cast<std::int64_t>(names_.size()));
    if (inserted) names_.emplace_back(name);
    return it->second;
  }

  const std::string& name(std::int64_t id) const {
    std::shared_lock lock(mutex_);
    return names_.at(static_cast<std::size_t>(id));
  }

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, std::int64_t> ids_;
  std::deque<std::string> names_;  // stable references
};

SymbolTable& symbols() {
  static SymbolTable table;
  return table;
}

}  // namespace

Constant Constant::symbol(std::string_view name) {
  if (name.empty()) throw std::invalid_argument("symbol constants must be non-empty");
  return Constant(Kind::symbol, symbols().intern(name));
}

std::int64_t Constant::as_integer() const {
  if (kind_ != Kind::integer) throw std::logic_error("constant '" + to_string() + "' is not an integer");
  return value_;
}

const std::string& Constant::symbol_name() const {
  if (kind_ != Kind::symbol) throw std::logic_error("constant is not a symbol");
  return symbols().name(value_);
}

std::string Constant::to_string() const {
  return kind_ == Kind::integer ? std::to_string(value_) : symbol_name();
}

std::ostream& operator<<(std::ostream& os, const Constant& c) { return os << c.to_string(); }

std::string tuple_to_string(const Tuple& t) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < t.size(); ++i) os << (i ? "," : "") << t[i];
  os << ')';
  return os.str();
}

}  // namespace nsl
