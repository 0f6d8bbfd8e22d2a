#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "milatp/types.hpp"

namespace milatp {

/// Parameters of the binary+fraction target encoding.
///
/// A raw ATP value v is divided by the bin width `r_bin`; the integer part
/// of the quotient is written as `n_bits` binary digits (most significant
/// first) and the remainder in [0,1) is kept as one fractional component.
/// The encoded vector therefore has B = n_bits + 1 entries.
struct CodecConfig {
  double atp_max = 400000.0;
  double r_bin = 20000.0;
  int n_bits = 0;  ///< 0 means: derive the smallest width that fits atp_max.

  /// Number of bins needed to cover [0, atp_max].
  long bin_count() const {
    return static_cast<long>(std::ceil(atp_max / r_bin - 1e-12));
  }

  /// Resolved bit width (derived when n_bits == 0).
  int bit_count() const {
    if (n_bits > 0) return n_bits;
    int n = 1;
    while ((1L << n) < bin_count()) ++n;
    return n;
  }

  /// Encoded vector dimension B (integer bits plus one fraction slot).
  int code_dim() const { return bit_count() + 1; }

  void validate(std::vector<std::string>& errors) const {
    if (!(r_bin > 0.0)) errors.push_back("codec: r_bin must be > 0");
    if (!(atp_max > r_bin))
      errors.push_back("codec: atp_max must be greater than r_bin");
    if (n_bits < 0) errors.push_back("codec: n_bits must be >= 0");
    if (n_bits > 0 && r_bin > 0.0 && (1L << n_bits) < bin_count()) {
      std::ostringstream os;
      os << "codec: 2^n_bits = " << (1L << n_bits) << " cannot hold "
         << bin_count() << " bins (atp_max=" << atp_max << ", r_bin=" << r_bin
         << ")";
      errors.push_back(os.str());
    }
  }

  void require_valid() const {
    std::vector<std::string> errors;
    validate(errors);
    if (!errors.empty()) {
      std::string joined;
      for (const auto& e : errors) joined += (joined.empty() ? "" : "; ") + e;
      throw std::invalid_argument(joined);
    }
  }
};

/// Encoded ATP target. Ground-truth codes have bits exactly in {0,1} and
/// fraction in [0,1); model outputs carry bit probabilities in [0,1].
template <class T>
struct AtpCode {
  Vec<T> bits;
  T fraction = T(0);
};

using AtpCoded = AtpCode<double>;

/// Encodes a raw ATP value as binary integer bits plus fractional residual.
/// Values exactly on a bin boundary take the higher integer part with
/// fraction 0 (floor semantics).
template <class T>
AtpCode<T> encode_atp(T value, const CodecConfig& cfg) {
  cfg.require_valid();
  if (value < T(0))
    throw std::domain_error("encode_atp: negative ATP value " +
                            std::to_string(static_cast<double>(value)));
  const int n = cfg.bit_count();
  const double q = static_cast<double>(value) / cfg.r_bin;
  const double ip = std::floor(q);
  const auto integer_part = static_cast<long>(ip);
  if (integer_part >= (1L << n)) {
    std::ostringstream os;
    os << "encode_atp: value " << static_cast<double>(value)
       << " needs integer part " << integer_part << " which overflows " << n
       << " bits";
    throw std::out_of_range(os.str());
  }
  AtpCode<T> code;
  code.bits = Vec<T>::Zero(n);
  for (int j = 0; j < n; ++j) {
    // Most significant bit first.
    code.bits[j] = static_cast<T>((integer_part >> (n - 1 - j)) & 1L);
  }
  code.fraction = static_cast<T>(q - ip);
  return code;
}

/// Value of the binary integer part, MSB first. Accepts probabilistic bits
/// (the weighted sum is then a soft integer part).
template <class T>
T code_integer_value(const Vec<T>& bits) {
  const int n = static_cast<int>(bits.size());
  T acc = T(0);
  for (int j = 0; j < n; ++j)
    acc += bits[j] * static_cast<T>(1L << (n - 1 - j));
  return acc;
}

/// Exact inverse of encode_atp for ground-truth codes.
template <class T>
T decode_atp(const AtpCode<T>& code, const CodecConfig& cfg) {
  if (static_cast<int>(code.bits.size()) != cfg.bit_count())
    throw std::invalid_argument("decode_atp: code has " +
                                std::to_string(code.bits.size()) +
                                " bits, config expects " +
                                std::to_string(cfg.bit_count()));
  return (code_integer_value(code.bits) + code.fraction) *
         static_cast<T>(cfg.r_bin);
}

/// Thresholds a probabilistic code at 0.5 (ties round up to 1) and returns
/// the physical value. The fraction channel passes through, clamped to
/// [0, 1].
template <class T>
T hard_decode(const Vec<T>& probs, const CodecConfig& cfg) {
  if (static_cast<int>(probs.size()) != cfg.code_dim())
    throw std::invalid_argument("hard_decode: code has " +
                                std::to_string(probs.size()) +
                                " entries, config expects " +
                                std::to_string(cfg.code_dim()));
  const int n = cfg.bit_count();
  AtpCode<T> code;
  code.bits.resize(n);
  for (int j = 0; j < n; ++j)
    code.bits[j] = probs[j] >= T(0.5) ? T(1) : T(0);
  code.fraction = std::min(std::max(probs[n], T(0)), T(1));
  return decode_atp(code, cfg);
}

/// Differentiable read-out of a (possibly probabilistic) code as a
/// normalized scalar in [0,1]. Used by the scalar regression loss branch.
template <class T>
T soft_decode(const AtpCode<T>& code, const CodecConfig& cfg) {
  const T raw = (code_integer_value(code.bits) + code.fraction) *
                static_cast<T>(cfg.r_bin) / static_cast<T>(cfg.atp_max);
  return std::min(std::max(raw, T(0)), T(1));
}

template <class T>
T normalize_atp(T value, const CodecConfig& cfg) {
  if (value < T(0) || static_cast<double>(value) > cfg.atp_max)
    throw std::domain_error("normalize_atp: value " +
                            std::to_string(static_cast<double>(value)) +
                            " outside [0, atp_max]");
  return value / static_cast<T>(cfg.atp_max);
}

template <class T>
T denormalize_atp(T u, const CodecConfig& cfg) {
  if (u < T(0) || u > T(1))
    throw std::domain_error("denormalize_atp: input " +
                            std::to_string(static_cast<double>(u)) +
                            " outside [0, 1]");
  return u * static_cast<T>(cfg.atp_max);
}

}  // namespace milatp
