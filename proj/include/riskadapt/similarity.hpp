#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace riskadapt {

// Lowercased ASCII alphanumeric runs, in order of appearance (duplicates kept).
std::vector<std::string> tokenize(std::string_view text);

// Sorted, de-duplicated tokens.
std::vector<std::string> token_set(std::string_view text);

std::size_t levenshtein(std::string_view a, std::string_view b);

// 1 - levenshtein / max-length on lowercased input; two empty strings are identical.
double edit_similarity(std::string_view a, std::string_view b);

// |A ∩ B| / |A ∪ B| over token sets; two empty sets are identical.
double token_jaccard(std::string_view a, std::string_view b);

}  // namespace riskadapt
