#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bimind/textprep/document.hpp"

namespace bimind::pipe {

/// Generator settings for the bundled synthetic corpora.
///
/// `content`: every document carries one or two decisive tokens from a
/// label-1 family or a label-0 family, plus filler words.
///
/// `knowledge`: documents come in clusters sharing rare marker words. Claims
/// hold a private slice of the cluster's markers and are labelled with the
/// cluster's hidden truth, yet contain no decisive token. Evidence documents
/// hold all markers, a truth-family token revealing the cluster's truth, and a
/// separate source-family token that alone decides their own label. Only a
/// model that looks at retrieved neighbors can label claims.
struct SynthSpec {
    std::string kind = "knowledge";
    std::size_t instances = 400;
    std::uint64_t seed = 0;
    std::size_t claims_per_cluster = 3;
    std::size_t evidence_per_cluster = 2;
    std::size_t markers_per_claim = 3;
    std::size_t filler_per_doc = 1;
    std::size_t decisive_per_doc = 2;
    // words drawn from each decisive family (at most 8)
    std::size_t family_size = 1;
    // copies of the truth token in each evidence document
    std::size_t truth_repeat = 3;

    void validate() const;
};

/// `name` is a preset ("knowledge" uses the defaults above; "content" uses
/// three fillers and all eight words per family) or a path to a
/// `key = value` file whose keys are the SynthSpec field names.
SynthSpec parse_synth_spec(const std::string& name);

std::vector<text::Record> generate_corpus(const SynthSpec& spec);

} // namespace bimind::pipe
