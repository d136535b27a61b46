#include "rl4seg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "rl4seg/morphology.hpp"

namespace rl4seg::eval {

double dice(const Mask& pred_bin, const Mask& ref_bin) {
    if (!pred_bin.same_shape(ref_bin)) throw std::invalid_argument("dice: shape mismatch");
    size_t np = 0, nr = 0, inter = 0;
    for (size_t i = 0; i < pred_bin.size(); ++i) {
        np += pred_bin.px[i] != 0;
        nr += ref_bin.px[i] != 0;
        inter += pred_bin.px[i] && ref_bin.px[i];
    }
    if (np + nr == 0) return 1.0;
    return 2.0 * double(inter) / double(np + nr);
}

std::optional<double> hausdorff_mm(const Mask& pred_bin, const Mask& ref_bin,
                                   float spacing_mm) {
    if (!pred_bin.same_shape(ref_bin))
        throw std::invalid_argument("hausdorff: shape mismatch");
    const auto pb = morph::boundary_pixels(pred_bin);
    const auto rb = morph::boundary_pixels(ref_bin);
    if (pb.empty() || rb.empty()) return std::nullopt;

    // distance-transform route: sample each boundary's EDT at the other set
    auto directed_sq = [&](const std::vector<std::pair<int, int>>& from,
                           const std::vector<std::pair<int, int>>& to) {
        Mask feat(pred_bin.h, pred_bin.w);
        for (auto [y, x] : to) feat.at(y, x) = 1;
        const std::vector<int64_t> d2 = morph::edt_sq(feat);
        int64_t worst = 0;
        for (auto [y, x] : from) worst = std::max(worst, d2[size_t(y) * feat.w + x]);
        return worst;
    };
    const int64_t d = std::max(directed_sq(pb, rb), directed_sq(rb, pb));
    return std::sqrt(double(d)) * double(spacing_mm);
}

Mask structure_endo(const Mask& m) { return m.binary(kLV); }

Mask structure_epi(const Mask& m) {
    Mask out(m.h, m.w);
    for (size_t i = 0; i < m.size(); ++i) out.px[i] = (m.px[i] == kLV || m.px[i] == kMYO);
    return out;
}

Mask postprocess(const Mask& m) {
    Mask out(m.h, m.w, kBG);
    for (uint8_t cls : {kLV, kMYO}) {
        const Mask bin = m.binary(cls);
        if (bin.count(1) == 0) continue;
        const Mask keep = morph::largest_component(bin, morph::Connectivity::eight);
        for (size_t i = 0; i < out.size(); ++i)
            if (keep.px[i]) out.px[i] = cls;
    }
    return out;
}

namespace {

double logit(double p) {
    p = std::min(std::max(p, ag::kProbEps), 1.0 - ag::kProbEps);
    return std::log(p / (1.0 - p));
}

double sigmoid(double z) {
    return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace

ag::Tensor uncertainty_map(const nets::UNet& reward_net, const Image& img,
                           const Mask& action, double temperature) {
    if (!(temperature > 0)) throw std::invalid_argument("uncertainty: T must be > 0");
    ag::Tensor r = nets::reward_forward(reward_net, img, action);
    for (auto& v : r.data) v = float(1.0 - sigmoid(logit(double(v)) / temperature));
    return r;
}

double bce_of_pairs(const std::vector<std::pair<ag::Tensor, Mask>>& pairs,
                    double temperature) {
    double acc = 0;
    size_t n = 0;
    for (const auto& [prob, target] : pairs) {
        for (size_t i = 0; i < prob.numel(); ++i) {
            double p = sigmoid(logit(double(prob.data[i])) / temperature);
            p = std::min(std::max(p, ag::kProbEps), 1.0 - ag::kProbEps);
            const double t = target.px[i] ? 1.0 : 0.0;
            acc += -(t * std::log(p) + (1.0 - t) * std::log1p(-p));
            ++n;
        }
    }
    return n ? acc / double(n) : 0.0;
}

double fit_temperature(const std::vector<std::pair<ag::Tensor, Mask>>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("fit_temperature: empty validation set");
    double lo = std::log(0.05), hi = std::log(20.0);
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = bce_of_pairs(pairs, std::exp(x1));
    double f2 = bce_of_pairs(pairs, std::exp(x2));
    for (int it = 0; it < 80 && hi - lo > 1e-6; ++it) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = bce_of_pairs(pairs, std::exp(x1));
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = bce_of_pairs(pairs, std::exp(x2));
        }
    }
    return std::exp(0.5 * (lo + hi));
}

CalibrationReport ece_and_reliability(const std::vector<float>& confidence,
                                      const std::vector<uint8_t>& correct, int bins) {
    if (confidence.size() != correct.size())
        throw std::invalid_argument("ece: confidence/correct length mismatch");
    if (bins < 1) throw std::invalid_argument("ece: need at least one bin");
    CalibrationReport rep;
    rep.bins = bins;
    rep.bin_conf.assign(size_t(bins), 0.0);
    rep.bin_acc.assign(size_t(bins), 0.0);
    rep.bin_count.assign(size_t(bins), 0);
    for (size_t i = 0; i < confidence.size(); ++i) {
        const double c = confidence[i];
        int b = int(c * bins);
        b = std::min(std::max(b, 0), bins - 1);
        rep.bin_conf[size_t(b)] += c;
        rep.bin_acc[size_t(b)] += correct[i] ? 1.0 : 0.0;
        ++rep.bin_count[size_t(b)];
    }
    double ece = 0;
    const double n = double(confidence.size());
    for (int b = 0; b < bins; ++b) {
        if (!rep.bin_count[size_t(b)]) continue;
        rep.bin_conf[size_t(b)] /= double(rep.bin_count[size_t(b)]);
        rep.bin_acc[size_t(b)] /= double(rep.bin_count[size_t(b)]);
        ece += double(rep.bin_count[size_t(b)]) / n *
               std::abs(rep.bin_acc[size_t(b)] - rep.bin_conf[size_t(b)]);
    }
    rep.ece = ece;
    return rep;
}

double auroc(const std::vector<float>& score, const std::vector<uint8_t>& label) {
    if (score.size() != label.size()) throw std::invalid_argument("auroc: length mismatch");
    std::vector<size_t> order(score.size());
    std::iota(order.begin(), order.end(), size_t(0));
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return score[a] < score[b]; });
    // rank-sum with midranks for ties
    double rank_sum_pos = 0;
    size_t n_pos = 0, n_neg = 0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j < order.size() && score[order[j]] == score[order[i]]) ++j;
        const double midrank = 0.5 * double(i + 1 + j);  // average of ranks i+1..j
        for (size_t k = i; k < j; ++k)
            if (label[order[k]]) rank_sum_pos += midrank;
        i = j;
    }
    for (uint8_t l : label) (l ? n_pos : n_neg) += 1;
    if (!n_pos || !n_neg) return 0.5;
    return (rank_sum_pos - double(n_pos) * (double(n_pos) + 1.0) / 2.0) /
           (double(n_pos) * double(n_neg));
}

SegMetrics evaluate_policy(const nets::UNet& policy,
                           const std::vector<const synth::Scene*>& test,
                           const anatomy::Thresholds& thr,
                           std::vector<PerSampleMetrics>* per_sample) {
    SegMetrics agg;
    std::vector<double> de, dp, he, hp;
    for (const synth::Scene* sc : test) {
        if (!sc->has_mask())
            throw std::invalid_argument("evaluate_policy: scene without reference mask");
        const Mask pred = postprocess(nets::greedy_action(nets::policy_forward(policy, sc->image)));
        PerSampleMetrics row;
        row.id = sc->id;
        row.dice_endo = dice(structure_endo(pred), structure_endo(sc->mask));
        row.dice_epi = dice(structure_epi(pred), structure_epi(sc->mask));
        row.hd_endo_mm = hausdorff_mm(structure_endo(pred), structure_endo(sc->mask),
                                      sc->spacing_mm);
        row.hd_epi_mm =
            hausdorff_mm(structure_epi(pred), structure_epi(sc->mask), sc->spacing_mm);
        row.anatomically_valid = anatomy::assess_validity(pred, thr).overall_valid();

        de.push_back(row.dice_endo);
        dp.push_back(row.dice_epi);
        if (row.hd_endo_mm && row.hd_epi_mm) {
            he.push_back(*row.hd_endo_mm);
            hp.push_back(*row.hd_epi_mm);
        } else {
            ++agg.hd_excluded;
        }
        agg.anatomical_validity += row.anatomically_valid;
        ++agg.n;
        if (per_sample) per_sample->push_back(std::move(row));
    }
    auto mean_of = [](const std::vector<double>& v) {
        return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    };
    auto std_of = [&](const std::vector<double>& v, double m) {
        if (v.size() < 2) return 0.0;
        double s = 0;
        for (double x : v) s += (x - m) * (x - m);
        return std::sqrt(s / double(v.size()));
    };
    agg.dice_endo = mean_of(de);
    agg.dice_epi = mean_of(dp);
    agg.dice_endo_std = std_of(de, agg.dice_endo);
    agg.dice_epi_std = std_of(dp, agg.dice_epi);
    agg.dice_avg = 0.5 * (agg.dice_endo + agg.dice_epi);
    agg.hd_endo_mm = mean_of(he);
    agg.hd_epi_mm = mean_of(hp);
    agg.hd_endo_std = std_of(he, agg.hd_endo_mm);
    agg.hd_epi_std = std_of(hp, agg.hd_epi_mm);
    agg.hd_avg_mm = 0.5 * (agg.hd_endo_mm + agg.hd_epi_mm);
    if (agg.n) agg.anatomical_validity /= double(agg.n);
    return agg;
}

void write_metrics_csv(const std::string& path, const std::vector<PerSampleMetrics>& rows,
                       const SegMetrics& aggregate) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "row,id,dice_endo,dice_epi,hd_endo_mm,hd_epi_mm,valid\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "sample,%d,%.9g,%.9g,%s,%s,%d\n", r.id, r.dice_endo,
                      r.dice_epi,
                      r.hd_endo_mm ? std::to_string(*r.hd_endo_mm).c_str() : "excluded",
                      r.hd_epi_mm ? std::to_string(*r.hd_epi_mm).c_str() : "excluded",
                      int(r.anatomically_valid));
        f << buf;
    }
    std::snprintf(buf, sizeof buf, "aggregate,%d,%.9g,%.9g,%.9g,%.9g,%.9g\n", aggregate.n,
                  aggregate.dice_endo, aggregate.dice_epi, aggregate.hd_endo_mm,
                  aggregate.hd_epi_mm, aggregate.anatomical_validity);
    f << buf;
    std::snprintf(buf, sizeof buf, "aggregate_avg,%d,%.9g,%.9g,%.9g,%.9g,%d\n", aggregate.n,
                  aggregate.dice_avg, aggregate.dice_avg, aggregate.hd_avg_mm,
                  aggregate.hd_avg_mm, aggregate.hd_excluded);
    f << buf;
}

void write_reliability_csv(const std::string& path, const CalibrationReport& rep) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "bin,conf,acc,count\n";
    char buf[128];
    for (int b = 0; b < rep.bins; ++b) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%zu\n", b, rep.bin_conf[size_t(b)],
                      rep.bin_acc[size_t(b)], rep.bin_count[size_t(b)]);
        f << buf;
    }
    std::snprintf(buf, sizeof buf, "ece,%.9g,,\n", rep.ece);
    f << buf;
    std::snprintf(buf, sizeof buf, "temperature,%.9g,,\n", rep.temperature);
    f << buf;
}

void write_reliability_svg(const std::string& path, const CalibrationReport& rep) {
    const int W = 420, H = 420, m = 50;  // plot margin
    const double span = double(W - 2 * m);
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
      << "'>\n";
    f << "<rect width='" << W << "' height='" << H << "' fill='white'/>\n";
    // frame and diagonal
    f << "<rect x='" << m << "' y='" << m << "' width='" << W - 2 * m << "' height='"
      << H - 2 * m << "' fill='none' stroke='black'/>\n";
    f << "<line x1='" << m << "' y1='" << H - m << "' x2='" << W - m << "' y2='" << m
      << "' stroke='gray' stroke-dasharray='6,4'/>\n";
    const double bw = span / rep.bins;
    for (int b = 0; b < rep.bins; ++b) {
        if (!rep.bin_count[size_t(b)]) continue;
        const double acc = rep.bin_acc[size_t(b)];
        const double x = m + b * bw;
        const double h = acc * (H - 2 * m);
        f << "<rect x='" << x + 1 << "' y='" << (H - m) - h << "' width='" << bw - 2
          << "' height='" << h << "' fill='steelblue' fill-opacity='0.7'/>\n";
        // mean confidence marker
        const double cx = m + rep.bin_conf[size_t(b)] * span;
        f << "<line x1='" << cx << "' y1='" << H - m << "' x2='" << cx << "' y2='"
          << (H - m) - (H - 2 * m) * rep.bin_conf[size_t(b)]
          << "' stroke='none'/>\n";
    }
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "<text x='%d' y='%d' font-size='14'>ECE = %.4f  (T = %.3f)</text>\n", m,
                  m - 12, rep.ece, rep.temperature);
    f << buf;
    f << "<text x='" << W / 2 - 40 << "' y='" << H - 10
      << "' font-size='12'>confidence</text>\n";
    f << "<text x='12' y='" << H / 2
      << "' font-size='12' transform='rotate(-90 12 " << H / 2 << ")'>accuracy</text>\n";
    f << "</svg>\n";
}

}  // namespace rl4seg::eval
