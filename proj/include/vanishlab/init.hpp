#pragma once

#include <Eigen/Dense>
#include <string>

#include "vanishlab/rng.hpp"

namespace vanishlab {

enum class Family { Uniform, Gaussian, Orthogonal };
enum class InitRule { LeCun, Xavier, He, CustomVariance, CustomRange };
enum class Activation { Linear, ReLU };

// Gate probability: fraction of activation gates that are open in expectation.
inline double gate_probability(Activation a) noexcept {
    return a == Activation::Linear ? 1.0 : 0.5;
}

inline const char* activation_name(Activation a) noexcept {
    return a == Activation::Linear ? "linear" : "relu";
}

// Population variance and fourth moment of a single weight entry.
struct MomentProfile {
    double sigma2 = 0.0;
    double mu4 = 0.0;
    double kurtosis() const { return mu4 / (sigma2 * sigma2); }
};

// A weight distribution family plus the rule fixing its scale from fan-in.
// Canonical textual form: "uniform:he", "gaussian:xavier",
// "uniform:range=1.5", "gaussian:var=0.25", "orthogonal".
struct InitScheme {
    Family family = Family::Uniform;
    InitRule rule = InitRule::LeCun;
    double value = 0.0;  // CustomVariance: sigma2; CustomRange: tau

    static InitScheme uniform(InitRule r) { return {Family::Uniform, r, 0.0}; }
    static InitScheme gaussian(InitRule r) { return {Family::Gaussian, r, 0.0}; }
    static InitScheme uniform_range(double tau) {
        return {Family::Uniform, InitRule::CustomRange, tau};
    }
    static InitScheme custom_variance(Family f, double sigma2) {
        return {f, InitRule::CustomVariance, sigma2};
    }
    static InitScheme orthogonal() { return {Family::Orthogonal, InitRule::Xavier, 0.0}; }

    std::string text() const;
    static InitScheme parse(const std::string& text);
};

// Variance prescribed by an initialization rule at the given fan-in.
double variance_for(const InitScheme& scheme, int fan_in);

// Half-width tau of the uniform support [-tau, tau] matching a variance.
double range_for_uniform(double sigma2);

// Population kurtosis of an i.i.d. family; rejects Orthogonal.
double kurtosis_of(Family family);

// Full entry-level moment profile of an i.i.d. scheme at the given fan-in.
MomentProfile moment_profile(const InitScheme& scheme, int fan_in);

// Draws a rows x cols weight matrix.  I.i.d. families fill entrywise; the
// Orthogonal family returns a Haar-distributed orthogonal matrix and
// requires rows == cols.
Eigen::MatrixXd sample_matrix(const InitScheme& scheme, int rows, int cols, Rng& rng);

}  // namespace vanishlab
