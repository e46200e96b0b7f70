// Provenance semirings: boolean worlds and top-k proof bags with exact
// probability of the bag's disjunction.
#pragma once

#include <Eigen/Dense>
#include <compare>
#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "nsl/input_facts.hpp"

namespace nsl {

class InputLiteral {
 public:
  constexpr InputLiteral() = default;
  static constexpr InputLiteral positive(FactId f) { return InputLiteral(f << 1); }
  static constexpr InputLiteral negative(FactId f) { return InputLiteral((f << 1) | 1u); }

  constexpr FactId fact() const { return code_ >> 1; }
  constexpr bool negated() const { return (code_ & 1u) != 0; }
  constexpr InputLiteral negation() const { return InputLiteral(code_ ^ 1u); }
  constexpr std::uint32_t code() const { return code_; }

  friend constexpr auto operator<=>(const InputLiteral&, const InputLiteral&) = default;

 private:
  constexpr explicit InputLiteral(std::uint32_t code) : code_(code) {}
  std::uint32_t code_ = 0;
};

/// Fact probabilities plus the exclusion structure they are read under.
class ProbAssignment {
 public:
  ProbAssignment() = default;
  ProbAssignment(Eigen::VectorXd probabilities, std::shared_ptr<const ExclusionLayout> layout);

  Eigen::Index size() const { return probs_.size(); }
  double operator[](FactId f) const { return probs_[f]; }
  const Eigen::VectorXd& probabilities() const { return probs_; }
  const ExclusionLayout& layout() const { return *layout_; }
  const std::shared_ptr<const ExclusionLayout>& layout_ptr() const { return layout_; }

  /// p for a positive literal, 1 - p for a negated one.
  double literal_weight(InputLiteral l) const;
  void set(FactId f, double p) { probs_[f] = p; }

  /// Groups whose values were produced by a softmax head.
  void mark_normalized(std::size_t group, bool normalized = true);
  bool normalized(std::size_t group) const { return normalized_[group]; }
  double group_mass(std::size_t group) const;

  /// Empty iff all values lie in [0,1] and every group flagged normalized
  /// sums to 1 within tol.
  std::vector<std::string> check(double tol = 1e-6) const;

 private:
  Eigen::VectorXd probs_;
  std::shared_ptr<const ExclusionLayout> layout_;
  std::vector<bool> normalized_;
};

struct Proof {
  std::vector<InputLiteral> literals;  // sorted, unique
  double weight = 1.0;

  friend bool operator==(const Proof&, const Proof&) = default;
};

/// Product of literal weights under env.
double proof_weight(const std::vector<InputLiteral>& literals, const ProbAssignment& env);

/// At most k proofs, sorted by weight descending then literal ids ascending,
/// with no proof a subset of another (so no two share a literal set).
class ProofBag {
 public:
  ProofBag() = default;

  static ProofBag zero() { return {}; }
  static ProofBag one();
  static ProofBag literal(InputLiteral l, const ProbAssignment& env);
  /// Dedup, drop absorbed supersets, sort and truncate to k. Weights are
  /// taken as given. *truncated is set when a proof not absorbed by a kept
  /// one had to be dropped.
  static ProofBag from_proofs(std::vector<Proof> proofs, std::size_t k, bool* truncated = nullptr);

  const std::vector<Proof>& proofs() const { return proofs_; }
  std::size_t size() const { return proofs_.size(); }
  bool empty() const { return proofs_.empty(); }
  const Proof& operator[](std::size_t i) const { return proofs_[i]; }

  /// Literal sets only; weights are derived data.
  bool same_proofs(const ProofBag& other) const;
  friend bool operator==(const ProofBag&, const ProofBag&) = default;

 private:
  std::vector<Proof> proofs_;
};

/// Conjoin two literal sets. Empty optional if the union contradicts itself
/// or picks two members of one exclusion group. Negated group members implied
/// by a positive member of the same group are dropped.
std::optional<std::vector<InputLiteral>> conjoin(const std::vector<InputLiteral>& a,
                                                 const std::vector<InputLiteral>& b,
                                                 const ExclusionLayout& layout);

ProofBag otimes(const ProofBag& a, const ProofBag& b, std::size_t k, const ProbAssignment& env,
                bool* truncated = nullptr);
ProofBag oplus(const ProofBag& a, const ProofBag& b, std::size_t k, bool* truncated = nullptr);

using SparseGradient = std::vector<std::pair<FactId, double>>;

struct DnfResult {
  double probability = 0.0;
  SparseGradient gradient;  // support facts in ascending id order
};

/// Exact probability of the disjunction of the bag's proofs, by Shannon
/// expansion over its support. Grouped facts expand jointly as one
/// categorical variable whose unlisted remainder carries 1 - sum(listed).
double dnf_probability(const ProofBag& bag, const ProbAssignment& env);

/// Partial derivatives w.r.t. each support fact probability. The result is
/// multilinear, so d/dp_i = P(p_i = 1) - P(p_i = 0).
SparseGradient dnf_gradient(const ProofBag& bag, const ProbAssignment& env);
DnfResult dnf_evaluate(const ProofBag& bag, const ProbAssignment& env);

/// Support facts of a bag, ascending.
std::vector<FactId> support(const ProofBag& bag);

// Semiring policies consumed by the reasoner's fixpoint.

struct BooleanSemiring {
  using Tag = bool;
  const std::vector<char>* world = nullptr;  // truth value per input fact

  Tag zero() const { return false; }
  Tag one() const { return true; }
  Tag input(FactId f, bool negated) const { return ((*world)[f] != 0) != negated; }
  Tag add(const Tag& a, const Tag& b) const { return a || b; }
  Tag mul(const Tag& a, const Tag& b) const { return a && b; }
  bool is_zero(const Tag& a) const { return !a; }
};

struct TopKSemiring {
  using Tag = ProofBag;
  std::size_t k = 1;
  const ProbAssignment* env = nullptr;
  bool* truncated = nullptr;  // set when any bag is cut to k

  Tag zero() const { return ProofBag::zero(); }
  Tag one() const { return ProofBag::one(); }
  Tag input(FactId f, bool negated) const {
    return ProofBag::literal(negated ? InputLiteral::negative(f) : InputLiteral::positive(f), *env);
  }
  Tag add(const Tag& a, const Tag& b) const { return oplus(a, b, k, truncated); }
  Tag mul(const Tag& a, const Tag& b) const { return otimes(a, b, k, *env, truncated); }
  bool is_zero(const Tag& a) const { return a.empty(); }
};

}  // namespace nsl
