// Grounding and bottom-up evaluation of programs under a provenance
// semiring. A Session is immutable; forward/backward are pure functions of
// (session, assignment) and may run concurrently.
#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsl/input_facts.hpp"
#include "nsl/logic.hpp"
#include "nsl/provenance.hpp"

namespace nsl {

class GroundingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GroundBodyRef {
  std::uint32_t index = 0;  // input fact id or derived atom id
  bool input = false;
  bool negated = false;
};

struct GroundRule {
  std::uint32_t head = 0;
  std::vector<GroundBodyRef> body;
  std::uint32_t rule = 0;  // source rule index
};

struct DerivedAtom {
  std::size_t relation = 0;
  Tuple args;
};

/// Ground program over declared finite domains. Only derived atoms that are
/// derivable when every input fact may hold are materialized.
struct Grounding {
  std::shared_ptr<const InputFactTable> facts;
  std::shared_ptr<const ExclusionLayout> layout;
  std::vector<DerivedAtom> atoms;
  std::vector<GroundRule> rules;
  std::vector<std::vector<std::uint32_t>> strata;  // ground rule ids
  std::vector<std::vector<std::uint32_t>> uses;    // atom -> ground rules reading it
  std::size_t query_relation = 0;
  std::vector<Tuple> answers;  // query relation domain, declaration order
  std::vector<std::optional<std::uint32_t>> answer_atoms;
};

struct CompileOptions {
  /// Cap on ground atoms plus ground rule instances.
  std::size_t max_ground_size = 1'000'000;
};

class Session {
 public:
  std::size_t train_k() const { return train_k_; }
  std::size_t test_k() const { return test_k_; }
  const Program& program() const { return *program_; }
  const Grounding& grounding() const { return *grounding_; }
  const InputFactTable& facts() const { return *grounding_->facts; }
  std::size_t fact_count() const { return grounding_->facts->size(); }
  std::vector<std::string> fact_names() const { return grounding_->facts->names(); }
  const std::vector<Tuple>& answers() const { return grounding_->answers; }
  std::size_t answer_count() const { return grounding_->answers.size(); }
  std::optional<std::size_t> answer_index(const Tuple& t) const;
  /// Assignment over this session's facts; groups whose values sum to one
  /// within 1e-6 are flagged normalized when mark_normalized is set.
  ProbAssignment assignment(Eigen::VectorXd probabilities, bool mark_normalized = true) const;

 private:
  friend Session compile(const Program&, std::size_t, CompileOptions);
  friend Session set_test_k(const Session&, std::size_t);

  std::shared_ptr<const Program> program_;
  std::shared_ptr<const Grounding> grounding_;
  std::size_t train_k_ = 1;
  std::size_t test_k_ = 1;
};

/// Throws ProgramError for invalid or unstratifiable programs and
/// GroundingError when the grounding exceeds the configured cap.
Session compile(const Program& program, std::size_t train_k, CompileOptions options = {});
Session set_test_k(const Session& session, std::size_t k);

/// Probability per candidate answer. Values need not sum to one.
struct OutputDistribution {
  std::vector<Tuple> answers;
  Eigen::VectorXd probabilities;

  double probability(const Tuple& answer) const;
};

enum class FixpointStrategy { semi_naive, naive };

/// Result of one forward pass. Keeps the per-answer proof bags so backward
/// never re-derives them.
struct Evaluation {
  OutputDistribution distribution;
  std::vector<ProofBag> bags;  // per answer
  ProbAssignment env;
  /// Some bag lost a non-absorbed proof to the k cut during the fixpoint.
  /// When false the probabilities are exact.
  bool truncated = false;
};

Evaluation forward(const Session& session, const ProbAssignment& env,
                   FixpointStrategy strategy = FixpointStrategy::semi_naive);

/// Chain rule: sum over answers of upstream(answer) * dP(answer)/dp(fact).
Eigen::VectorXd backward(const Session& session, const Evaluation& eval, const Eigen::VectorXd& upstream);
/// Same, keyed by answer tuple; unknown tuples throw std::invalid_argument.
Eigen::VectorXd backward(const Session& session, const Evaluation& eval, const std::map<Tuple, double>& upstream);

/// dP(answer)/dp(fact), answers x facts.
Eigen::MatrixXd jacobian(const Session& session, const Evaluation& eval);

struct OracleOptions {
  std::size_t max_worlds = std::size_t{1} << 20;
};

/// Exact distribution by enumerating every world with nonzero weight
/// (one-hot per exclusion group, binary for independent uncertain facts) and
/// evaluating the program in the boolean semiring in each.
OutputDistribution oracle_forward(const Session& session, const ProbAssignment& env, OracleOptions options = {});

/// Number of worlds oracle_forward would enumerate for env.
double oracle_world_count(const Session& session, const ProbAssignment& env);

}  // namespace nsl
