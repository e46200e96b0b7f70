// Parser, validator and stratifier for the `.nsl` Datalog-lite dialect.
// The grammar is documented in docs/nsl-language.md.
#pragma once

#include <string_view>
#include <vector>

#include "nsl/logic.hpp"

namespace nsl {

/// Parse and resolve names; throws ProgramError on syntax errors, unknown
/// relations or arity mismatches. Program invariants are not checked.
Program parse_unchecked(std::string_view text);

/// parse_unchecked followed by validate(); throws ProgramError listing every
/// diagnostic if the program is not well formed.
Program parse_program(std::string_view text);

/// Empty iff the program satisfies every invariant. Each message starts with
/// the name of the violated invariant.
std::vector<Diagnostic> validate(const Program& program);

/// Rule indices grouped into strata. Negated dependencies on derived
/// relations always land in a strictly earlier stratum; input relations do
/// not create strata. Throws ProgramError when a cycle runs through negation.
std::vector<std::vector<std::size_t>> stratify(const Program& program);

}  // namespace nsl
