#pragma once

// The universal action space: an N x D matrix of learnable code embeddings,
// and the ways of turning extractor logits into a code.
//
//   soft  Gumbel-Softmax mixture of rows (training)
//   hard  argmax row, lowest index on ties (inference)
//   ste   argmax of Gumbel-perturbed logits forward, soft weights backward
//
// Logits are log-probabilities up to an additive constant.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "actvocab/rng.hpp"
#include "actvocab/tensor.hpp"

namespace actvocab::codebook {

enum class SelectionMode { soft, hard, ste };

std::string to_string(SelectionMode mode);
SelectionMode parse_selection_mode(const std::string& text);

class UniversalCodebook {
public:
    /// Rows drawn i.i.d. from N(0, 1/dim). Throws for n_codes < 2 or dim < 1.
    static UniversalCodebook init(std::size_t n_codes, std::size_t dim, std::uint64_t seed);
    /// Wraps an existing [N, D] parameter tensor (e.g. from a checkpoint).
    explicit UniversalCodebook(grad::Tensor embeddings);

    std::size_t n_codes() const { return n_codes_; }
    std::size_t dim() const { return dim_; }
    const grad::Tensor& embeddings() const { return embeddings_; }
    grad::Tensor& embeddings() { return embeddings_; }
    std::span<const double> row(std::size_t code) const;

private:
    std::size_t n_codes_;
    std::size_t dim_;
    grad::Tensor embeddings_;
};

struct CodeSelection {
    std::vector<double> weights;
    std::size_t selected_index = 0;
    std::vector<double> u_star;
    double temperature = 1.0;
    SelectionMode mode = SelectionMode::hard;
};

/// -ln(-ln(u)) for u in (0, 1).
double gumbel_from_uniform(double u);
std::vector<double> sample_gumbel(std::size_t count, Rng& rng);

/// Argmax with ties broken by the lowest index.
std::size_t argmax(std::span<const double> values);

CodeSelection select_soft(const UniversalCodebook& codebook, std::span<const double> logits, double tau,
                          std::uint64_t noise_seed);
/// select_soft with caller-provided Gumbel noise.
CodeSelection select_soft_with_noise(const UniversalCodebook& codebook, std::span<const double> logits,
                                     double tau, std::span<const double> noise);
CodeSelection select_hard(const UniversalCodebook& codebook, std::span<const double> logits);
CodeSelection select_ste(const UniversalCodebook& codebook, std::span<const double> logits,
                         std::uint64_t noise_seed, double tau = 1.0);

// Differentiable selection over a batch of logits [B, N]. `noise` holds B*N
// Gumbel samples (ignored in hard mode). u_star is [B, D].
struct BatchSelection {
    grad::Tensor weights;
    grad::Tensor u_star;
    std::vector<std::size_t> selected;
};

BatchSelection select_batch(const UniversalCodebook& codebook, const grad::Tensor& logits,
                            std::span<const double> noise, double tau, SelectionMode mode);

struct AnnealSchedule {
    double tau_start = 2.0;
    double tau_min = 0.5;
    double decay_rate = 0.0;
    std::uint64_t total_steps = 1;

    /// Exponential decay that reaches tau_min exactly at total_steps.
    static AnnealSchedule spanning(double tau_start, double tau_min, std::uint64_t total_steps);
    void validate() const;
};

/// tau(step) = max(tau_min, tau_start * exp(-decay_rate * step))
double anneal(const AnnealSchedule& schedule, std::uint64_t step);

struct Utilization {
    std::vector<double> histogram;
    double entropy = 0.0;  // nats
    double perplexity = 1.0;
};

Utilization utilization(std::span<const std::size_t> selections, std::size_t n_codes);
/// Entropy/perplexity of an already-normalized histogram.
Utilization utilization_from_histogram(std::vector<double> histogram);

}  // namespace actvocab::codebook
