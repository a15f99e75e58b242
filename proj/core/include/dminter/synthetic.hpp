#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dminter/dataset.hpp"
#include "dminter/hierarchy.hpp"

namespace dminter {

/// Phrases planted for one leaf intent. See docs/synthetic_corpus.md.
struct CueTable {
  IntentId intent;
  Lean lean;
  std::vector<std::string> phrases;
};

const std::vector<CueTable>& cue_tables();
/// Every word the filler templates can emit. Disjoint from the cue words.
const std::vector<std::string>& filler_lexicon();

/// Intent whose cue phrase occurs in `text` (word-level match), if any.
std::optional<IntentId> find_cue(std::string_view text);

/// Cue-lookup classifier: the lean of the planted cue, or nullopt when the
/// text carries none.
std::optional<Veracity> cue_oracle(std::string_view text);

/// Filler sentences plus, with probability cue_strength, one cue phrase for a
/// uniformly chosen leaf intent. Cued articles take the cue's lean with
/// probability cue_strength; uncued articles get a fair-coin label.
DatasetSplits generate_synthetic_corpus(std::uint64_t seed, std::size_t n_train, std::size_t n_val,
                                        std::size_t n_test, double cue_strength);

}  // namespace dminter
