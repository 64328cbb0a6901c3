#include "actvocab/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace actvocab::codebook {

namespace {

void require_finite(std::span<const double> logits) {
    for (double x : logits)
        if (!std::isfinite(x)) throw std::invalid_argument("code selection: logits must be finite");
}

void require_width(const UniversalCodebook& codebook, std::size_t width) {
    if (width != codebook.n_codes())
        throw grad::ShapeError("code selection: got " + std::to_string(width) + " logits for a codebook of " +
                               std::to_string(codebook.n_codes()) + " codes");
}

std::vector<double> one_hot_rows(std::span<const std::size_t> selected, std::size_t n) {
    std::vector<double> out(selected.size() * n, 0.0);
    for (std::size_t r = 0; r < selected.size(); ++r) out[r * n + selected[r]] = 1.0;
    return out;
}

CodeSelection single(const UniversalCodebook& codebook, std::span<const double> logits,
                     std::span<const double> noise, double tau, SelectionMode mode) {
    grad::NoGradGuard no_grad;
    auto batch = select_batch(codebook, grad::Tensor::constant({1, logits.size()}, {logits.begin(), logits.end()}),
                              noise, tau, mode);
    CodeSelection out;
    out.weights.assign(batch.weights.data().begin(), batch.weights.data().end());
    out.u_star.assign(batch.u_star.data().begin(), batch.u_star.data().end());
    out.selected_index = batch.selected[0];
    out.temperature = tau;
    out.mode = mode;
    return out;
}

}  // namespace

std::string to_string(SelectionMode mode) {
    switch (mode) {
        case SelectionMode::soft: return "soft";
        case SelectionMode::hard: return "hard";
        case SelectionMode::ste: return "ste";
    }
    return "unknown";
}

SelectionMode parse_selection_mode(const std::string& text) {
    if (text == "soft" || text == "gumbel") return SelectionMode::soft;
    if (text == "hard") return SelectionMode::hard;
    if (text == "ste") return SelectionMode::ste;
    throw std::invalid_argument("unknown selection mode '" + text + "' (expected soft, gumbel, hard or ste)");
}

UniversalCodebook UniversalCodebook::init(std::size_t n_codes, std::size_t dim, std::uint64_t seed) {
    if (n_codes < 2) throw std::invalid_argument("codebook needs at least 2 codes, got " + std::to_string(n_codes));
    if (dim < 1) throw std::invalid_argument("codebook dimension must be positive");
    Rng rng(seed, {0xC0DEB00CULL});
    const double stddev = 1.0 / std::sqrt(static_cast<double>(dim));
    std::vector<double> values(n_codes * dim);
    for (auto& v : values) v = stddev * rng.normal();
    return UniversalCodebook(grad::Tensor::parameter({n_codes, dim}, std::move(values)));
}

UniversalCodebook::UniversalCodebook(grad::Tensor embeddings) : embeddings_(std::move(embeddings)) {
    if (!embeddings_.defined() || embeddings_.shape().size() != 2)
        throw grad::ShapeError("codebook embeddings must be a 2-d tensor");
    n_codes_ = embeddings_.shape()[0];
    dim_ = embeddings_.shape()[1];
    if (n_codes_ < 2) throw std::invalid_argument("codebook needs at least 2 codes");
    const auto data = embeddings_.data();
    for (std::size_t i = 0; i < n_codes_; ++i) {
        const auto r = data.subspan(i * dim_, dim_);
        if (std::all_of(r.begin(), r.end(), [](double x) { return x == 0.0; }))
            throw std::invalid_argument("codebook row " + std::to_string(i) + " is all zeros");
    }
}

std::span<const double> UniversalCodebook::row(std::size_t code) const {
    if (code >= n_codes_)
        throw std::out_of_range("code " + std::to_string(code) + " outside [0, " + std::to_string(n_codes_) + ")");
    return embeddings_.data().subspan(code * dim_, dim_);
}

double gumbel_from_uniform(double u) {
    if (!(u > 0.0 && u < 1.0)) throw std::domain_error("gumbel_from_uniform needs u in (0, 1)");
    return -std::log(-std::log(u));
}

std::vector<double> sample_gumbel(std::size_t count, Rng& rng) {
    std::vector<double> out(count);
    for (auto& x : out) x = gumbel_from_uniform(rng.uniform_open());
    return out;
}

std::size_t argmax(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

BatchSelection select_batch(const UniversalCodebook& codebook, const grad::Tensor& logits,
                            std::span<const double> noise, double tau, SelectionMode mode) {
    if (logits.shape().size() != 2) throw grad::ShapeError("select_batch expects logits of shape [B, N]");
    const std::size_t rows = logits.rows(), n = logits.cols();
    require_width(codebook, n);
    require_finite(logits.data());

    BatchSelection out;
    out.selected.resize(rows);
    if (mode == SelectionMode::hard) {
        for (std::size_t r = 0; r < rows; ++r) out.selected[r] = argmax(logits.data().subspan(r * n, n));
        out.weights = grad::Tensor::constant({rows, n}, one_hot_rows(out.selected, n));
        out.u_star = grad::matmul(out.weights, codebook.embeddings());
        return out;
    }

    if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("temperature must be positive and finite");
    if (noise.size() != rows * n)
        throw grad::ShapeError("select_batch: expected " + std::to_string(rows * n) + " noise values, got " +
                               std::to_string(noise.size()));
    require_finite(noise);
    const auto perturbed = grad::add(logits, grad::Tensor::constant({rows, n}, {noise.begin(), noise.end()}));
    const auto soft = grad::softmax(grad::scale(perturbed, 1.0 / tau));
    if (mode == SelectionMode::soft) {
        for (std::size_t r = 0; r < rows; ++r) out.selected[r] = argmax(soft.data().subspan(r * n, n));
        out.weights = soft;
    } else {
        for (std::size_t r = 0; r < rows; ++r) out.selected[r] = argmax(perturbed.data().subspan(r * n, n));
        out.weights = grad::straight_through(soft, one_hot_rows(out.selected, n));
    }
    out.u_star = grad::matmul(out.weights, codebook.embeddings());
    return out;
}

CodeSelection select_soft(const UniversalCodebook& codebook, std::span<const double> logits, double tau,
                          std::uint64_t noise_seed) {
    Rng rng(noise_seed, {0x6E015EULL});
    const auto noise = sample_gumbel(logits.size(), rng);
    return single(codebook, logits, noise, tau, SelectionMode::soft);
}

CodeSelection select_soft_with_noise(const UniversalCodebook& codebook, std::span<const double> logits,
                                     double tau, std::span<const double> noise) {
    return single(codebook, logits, noise, tau, SelectionMode::soft);
}

CodeSelection select_hard(const UniversalCodebook& codebook, std::span<const double> logits) {
    return single(codebook, logits, {}, 1.0, SelectionMode::hard);
}

CodeSelection select_ste(const UniversalCodebook& codebook, std::span<const double> logits,
                         std::uint64_t noise_seed, double tau) {
    Rng rng(noise_seed, {0x6E015EULL});
    const auto noise = sample_gumbel(logits.size(), rng);
    return single(codebook, logits, noise, tau, SelectionMode::ste);
}

AnnealSchedule AnnealSchedule::spanning(double tau_start, double tau_min, std::uint64_t total_steps) {
    if (!(tau_min > 0.0) || !(tau_start >= tau_min))
        throw std::invalid_argument("anneal schedule needs 0 < tau_min <= tau_start");
    if (total_steps == 0) throw std::invalid_argument("anneal schedule needs total_steps >= 1");
    AnnealSchedule s{tau_start, tau_min, std::log(tau_start / tau_min) / static_cast<double>(total_steps),
                     total_steps};
    return s;
}

void AnnealSchedule::validate() const {
    if (!(tau_min > 0.0) || !(tau_start >= tau_min) || !std::isfinite(tau_start))
        throw std::invalid_argument("anneal schedule needs 0 < tau_min <= tau_start");
    if (!(decay_rate >= 0.0) || !std::isfinite(decay_rate))
        throw std::invalid_argument("anneal decay_rate must be nonnegative");
    if (total_steps == 0) throw std::invalid_argument("anneal schedule needs total_steps >= 1");
}

double anneal(const AnnealSchedule& schedule, std::uint64_t step) {
    return std::max(schedule.tau_min,
                    schedule.tau_start * std::exp(-schedule.decay_rate * static_cast<double>(step)));
}

Utilization utilization_from_histogram(std::vector<double> histogram) {
    Utilization u;
    u.entropy = 0.0;
    for (double p : histogram)
        if (p > 0.0) u.entropy -= p * std::log(p);
    u.perplexity = std::exp(u.entropy);
    u.histogram = std::move(histogram);
    return u;
}

Utilization utilization(std::span<const std::size_t> selections, std::size_t n_codes) {
    if (selections.empty()) throw std::invalid_argument("utilization of an empty selection sequence");
    std::vector<std::uint64_t> counts(n_codes, 0);
    for (auto s : selections) {
        if (s >= n_codes)
            throw std::out_of_range("selection " + std::to_string(s) + " outside [0, " + std::to_string(n_codes) + ")");
        ++counts[s];
    }
    std::vector<double> histogram(n_codes);
    const double total = static_cast<double>(selections.size());
    for (std::size_t i = 0; i < n_codes; ++i) histogram[i] = static_cast<double>(counts[i]) / total;
    return utilization_from_histogram(std::move(histogram));
}

}  // namespace actvocab::codebook
