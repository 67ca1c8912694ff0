#pragma once

#include <string>

#include "ael/canonical.hpp"

namespace ael::reflection {

// Diagnosis of one slow window, injected into the next window's planner context.
struct ReflectionInsight {
    std::string causal_insight;
    std::string regime;  // bull | bear | flat | mixed
    double confidence = 0.0;
    std::size_t window = 0;

    Json to_json() const {
        return {{"causal_insight", causal_insight}, {"regime", regime}, {"confidence", confidence}, {"window", window}};
    }
};

bool is_regime(const std::string& label);

}  // namespace ael::reflection
