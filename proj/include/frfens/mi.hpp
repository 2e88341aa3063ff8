#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "frfens/errors.hpp"

// Mutual-information ranking of pool classifiers and the ranked-prefix
// ensemble growth that picks the best ensemble size.
namespace frfens::mi {

// A sequence of hard class labels (argmax of the classifier outputs).
struct LabelSeq {
    std::vector<int> values;
    int n_classes = 2;

    void validate() const;
    std::size_t size() const { return values.size(); }
};

// Shannon entropy of the empirical label distribution, in nats.
double entropy(const LabelSeq& x);

// Empirical conditional entropy H(x | given), in nats.
double conditional_entropy(const LabelSeq& x, const LabelSeq& given);

// MI(pred; truth) = H(truth) - H(truth | pred), clamped at 0 against
// rounding. Symmetric in its arguments.
double mutual_information(const LabelSeq& pred, const LabelSeq& truth);

struct RankResult {
    std::vector<int> order;       // model indices, best first
    std::vector<double> mi;       // per model, in original index order
    std::vector<std::string> tie_log;
};

// Ranks classifiers by MI with the truth, descending. Exact MI ties fall
// back to higher validation accuracy, then lower model index; every tie
// taken over by a fallback is logged.
RankResult rank_classifiers(const std::vector<LabelSeq>& preds, const LabelSeq& truth,
                            std::span<const double> accuracies);

struct GrowthResult {
    std::vector<double> accuracy_curve; // curve[k-1] = accuracy of top-k fusion
    int best_k = 0;                     // smallest k attaining the curve maximum
};

// Fuses the top-k ranked models for every k and scores each prefix against
// the truth. `fuse_prefix` receives the ranked model indices of one prefix
// and must return the predicted class per validation sample.
GrowthResult grow_ensemble(
    const std::vector<int>& ranked_order,
    const std::function<std::vector<int>(std::span<const int>)>& fuse_prefix,
    const LabelSeq& truth);

} // namespace frfens::mi
