#include "frfens/mi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace frfens::mi {

void LabelSeq::validate() const {
    if (values.empty()) throw Error("label sequence is empty");
    if (n_classes < 1) throw Error("label sequence needs at least 1 class");
    for (int v : values)
        if (v < 0 || v >= n_classes)
            throw Error("label " + std::to_string(v) + " outside [0, " +
                        std::to_string(n_classes) + ")");
}

double entropy(const LabelSeq& x) {
    x.validate();
    std::vector<int> count(static_cast<std::size_t>(x.n_classes), 0);
    for (int v : x.values) ++count[static_cast<std::size_t>(v)];
    const double inv_n = 1.0 / static_cast<double>(x.values.size());
    double h = 0.0;
    for (int c : count) {
        if (c == 0) continue;
        const double p = c * inv_n;
        h -= p * std::log(p);
    }
    return h;
}

double conditional_entropy(const LabelSeq& x, const LabelSeq& given) {
    x.validate();
    given.validate();
    if (x.values.size() != given.values.size())
        throw Error("conditional entropy: sequence lengths differ");

    const std::size_t nx = static_cast<std::size_t>(x.n_classes);
    const std::size_t ng = static_cast<std::size_t>(given.n_classes);
    std::vector<int> joint(nx * ng, 0);
    std::vector<int> marg(ng, 0);
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        const std::size_t xi = static_cast<std::size_t>(x.values[i]);
        const std::size_t gi = static_cast<std::size_t>(given.values[i]);
        ++joint[gi * nx + xi];
        ++marg[gi];
    }

    const double inv_n = 1.0 / static_cast<double>(x.values.size());
    double h = 0.0;
    for (std::size_t g = 0; g < ng; ++g) {
        if (marg[g] == 0) continue;
        for (std::size_t xi = 0; xi < nx; ++xi) {
            const int c = joint[g * nx + xi];
            if (c == 0) continue;
            const double p_joint = c * inv_n;
            const double p_cond = static_cast<double>(c) / static_cast<double>(marg[g]);
            h -= p_joint * std::log(p_cond);
        }
    }
    return h;
}

double mutual_information(const LabelSeq& pred, const LabelSeq& truth) {
    const double mi = entropy(truth) - conditional_entropy(truth, pred);
    return std::max(mi, 0.0);
}

RankResult rank_classifiers(const std::vector<LabelSeq>& preds, const LabelSeq& truth,
                            std::span<const double> accuracies) {
    if (preds.empty()) throw Error("ranking an empty classifier pool");
    if (accuracies.size() != preds.size())
        throw ShapeError("ranking: one accuracy per classifier required");

    const int n = static_cast<int>(preds.size());
    RankResult r;
    r.mi.resize(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i)
        r.mi[static_cast<std::size_t>(i)] =
            mutual_information(preds[static_cast<std::size_t>(i)], truth);

    r.order.resize(static_cast<std::size_t>(n));
    std::iota(r.order.begin(), r.order.end(), 0);
    std::stable_sort(r.order.begin(), r.order.end(), [&](int a, int b) {
        const double ma = r.mi[static_cast<std::size_t>(a)];
        const double mb = r.mi[static_cast<std::size_t>(b)];
        if (ma != mb) return ma > mb;
        const double aa = accuracies[static_cast<std::size_t>(a)];
        const double ab = accuracies[static_cast<std::size_t>(b)];
        if (aa != ab) return aa > ab;
        return a < b;
    });

    for (int k = 0; k + 1 < n; ++k) {
        const int a = r.order[static_cast<std::size_t>(k)];
        const int b = r.order[static_cast<std::size_t>(k) + 1];
        if (r.mi[static_cast<std::size_t>(a)] == r.mi[static_cast<std::size_t>(b)]) {
            const bool by_acc = accuracies[static_cast<std::size_t>(a)] !=
                                accuracies[static_cast<std::size_t>(b)];
            r.tie_log.push_back("models " + std::to_string(a) + " and " +
                                std::to_string(b) + " tie on MI; broken by " +
                                (by_acc ? "accuracy" : "index"));
        }
    }
    return r;
}

GrowthResult grow_ensemble(
    const std::vector<int>& ranked_order,
    const std::function<std::vector<int>(std::span<const int>)>& fuse_prefix,
    const LabelSeq& truth) {
    if (ranked_order.empty()) throw Error("growing an ensemble from an empty ranking");
    truth.validate();

    GrowthResult g;
    g.accuracy_curve.reserve(ranked_order.size());
    for (std::size_t k = 1; k <= ranked_order.size(); ++k) {
        std::vector<int> decided;
        try {
            decided = fuse_prefix(std::span<const int>(ranked_order.data(), k));
        } catch (const Error& e) {
            throw Error("fusing top-" + std::to_string(k) + " models: " + e.what());
        }
        if (decided.size() != truth.values.size())
            throw ShapeError("fusion callback returned " + std::to_string(decided.size()) +
                             " decisions for " + std::to_string(truth.values.size()) +
                             " samples");
        int hits = 0;
        for (std::size_t i = 0; i < decided.size(); ++i)
            if (decided[i] == truth.values[i]) ++hits;
        g.accuracy_curve.push_back(static_cast<double>(hits) /
                                   static_cast<double>(decided.size()));
    }

    const auto best = std::max_element(g.accuracy_curve.begin(), g.accuracy_curve.end());
    g.best_k = static_cast<int>(best - g.accuracy_curve.begin()) + 1;
    return g;
}

} // namespace frfens::mi
