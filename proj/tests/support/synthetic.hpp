#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "necti/core.hpp"

namespace necti::testing {

// Corpus with a fixed bracketing per component count (3, 4 or 5) and labels
// determined by the word class of each span's last component. Label XC is
// left-headed, XA and XB right-headed. Word classes are redrawn until the
// tree is the one recovered from its own dependency arcs.
std::vector<Sentence> synthetic_corpus(std::size_t n_sentences, std::uint64_t seed);
LabelInventory synthetic_inventory();
std::string synthetic_corpus_text(std::size_t n_sentences, std::uint64_t seed);

// Small dimensions with the default optimisation settings.
ModelConfig small_config();

}  // namespace necti::testing
