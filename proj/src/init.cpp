#include "vanishlab/init.hpp"

#include <cmath>
#include <stdexcept>

namespace vanishlab {

namespace {

const char* family_name(Family f) {
    switch (f) {
        case Family::Uniform: return "uniform";
        case Family::Gaussian: return "gaussian";
        case Family::Orthogonal: return "orthogonal";
    }
    return "?";
}

}  // namespace

std::string InitScheme::text() const {
    if (family == Family::Orthogonal) return "orthogonal";
    std::string out = family_name(family);
    out += ':';
    switch (rule) {
        case InitRule::LeCun: out += "lecun"; break;
        case InitRule::Xavier: out += "xavier"; break;
        case InitRule::He: out += "he"; break;
        case InitRule::CustomVariance: out += "var=" + std::to_string(value); break;
        case InitRule::CustomRange: out += "range=" + std::to_string(value); break;
    }
    return out;
}

InitScheme InitScheme::parse(const std::string& text) {
    if (text == "orthogonal") return InitScheme::orthogonal();
    const auto colon = text.find(':');
    if (colon == std::string::npos)
        throw std::invalid_argument("init scheme '" + text + "': expected family:rule");
    const std::string fam = text.substr(0, colon);
    const std::string rule = text.substr(colon + 1);

    InitScheme s;
    if (fam == "uniform") s.family = Family::Uniform;
    else if (fam == "gaussian") s.family = Family::Gaussian;
    else throw std::invalid_argument("init scheme '" + text + "': unknown family '" + fam + "'");

    if (rule == "lecun") s.rule = InitRule::LeCun;
    else if (rule == "xavier") s.rule = InitRule::Xavier;
    else if (rule == "he") s.rule = InitRule::He;
    else if (rule.rfind("var=", 0) == 0) {
        s.rule = InitRule::CustomVariance;
        s.value = std::stod(rule.substr(4));
        if (s.value <= 0) throw std::invalid_argument("init scheme: var must be > 0");
    } else if (rule.rfind("range=", 0) == 0) {
        if (s.family != Family::Uniform)
            throw std::invalid_argument("init scheme: range= is only valid for the uniform family");
        s.rule = InitRule::CustomRange;
        s.value = std::stod(rule.substr(6));
        if (s.value <= 0) throw std::invalid_argument("init scheme: range must be > 0");
    } else {
        throw std::invalid_argument("init scheme '" + text + "': unknown rule '" + rule + "'");
    }
    return s;
}

double variance_for(const InitScheme& scheme, int fan_in) {
    if (fan_in < 1) throw std::invalid_argument("variance_for: fan_in must be >= 1");
    const double d = static_cast<double>(fan_in);
    switch (scheme.rule) {
        case InitRule::LeCun: return 1.0 / (3.0 * d);
        case InitRule::Xavier: return 1.0 / d;
        case InitRule::He: return 2.0 / d;
        case InitRule::CustomVariance:
            if (scheme.value <= 0) throw std::invalid_argument("variance_for: variance must be > 0");
            return scheme.value;
        case InitRule::CustomRange:
            if (scheme.family != Family::Uniform)
                throw std::invalid_argument("variance_for: CustomRange requires the uniform family");
            return scheme.value * scheme.value / 3.0;
    }
    throw std::invalid_argument("variance_for: unknown rule");
}

double range_for_uniform(double sigma2) {
    if (sigma2 <= 0) throw std::invalid_argument("range_for_uniform: sigma2 must be > 0");
    return std::sqrt(3.0 * sigma2);
}

double kurtosis_of(Family family) {
    switch (family) {
        case Family::Gaussian: return 3.0;
        case Family::Uniform: return 9.0 / 5.0;
        case Family::Orthogonal:
            throw std::invalid_argument("kurtosis_of: orthogonal entries are not i.i.d.");
    }
    throw std::invalid_argument("kurtosis_of: unknown family");
}

MomentProfile moment_profile(const InitScheme& scheme, int fan_in) {
    if (scheme.family == Family::Orthogonal)
        throw std::invalid_argument("moment_profile: orthogonal entries are not i.i.d.");
    const double sigma2 = variance_for(scheme, fan_in);
    return {sigma2, kurtosis_of(scheme.family) * sigma2 * sigma2};
}

Eigen::MatrixXd sample_matrix(const InitScheme& scheme, int rows, int cols, Rng& rng) {
    if (rows < 1 || cols < 1) throw std::invalid_argument("sample_matrix: empty shape");
    Eigen::MatrixXd m(rows, cols);

    if (scheme.family == Family::Orthogonal) {
        if (rows != cols)
            throw std::invalid_argument("sample_matrix: orthogonal requires a square shape");
        for (int j = 0; j < cols; ++j)
            for (int i = 0; i < rows; ++i) m(i, j) = rng.gaussian();
        // Haar measure: QR of a Gaussian matrix, diagonal of R sign-corrected.
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
        Eigen::MatrixXd q = qr.householderQ();
        const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
        for (int j = 0; j < cols; ++j)
            if (r(j, j) < 0) q.col(j) = -q.col(j);
        return q;
    }

    const double sigma2 = variance_for(scheme, cols);
    if (scheme.family == Family::Uniform) {
        const double tau = range_for_uniform(sigma2);
        for (int j = 0; j < cols; ++j)
            for (int i = 0; i < rows; ++i) m(i, j) = rng.uniform_symmetric(tau);
    } else {
        const double sigma = std::sqrt(sigma2);
        for (int j = 0; j < cols; ++j)
            for (int i = 0; i < rows; ++i) m(i, j) = sigma * rng.gaussian();
    }
    return m;
}

}  // namespace vanishlab
