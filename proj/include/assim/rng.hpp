#ifndef ASSIM_RNG_HPP
#define ASSIM_RNG_HPP

#include <cstdint>
#include <initializer_list>

#include <Eigen/Core>

namespace assim {

/// Counter-based random stream. A stream is identified by a 64-bit key;
/// output i is a pure function of (key, i), so streams can be derived for
/// any (purpose, replicate, step, particle) path and replayed exactly.
/// Normal variates use the inverse CDF, consuming one uniform per draw.
class RngStream {
public:
    explicit RngStream(std::uint64_t key) : key_(key) {}

    /// Derive a stream key by hashing a path of indices under a master seed.
    static RngStream derive(std::uint64_t master,
                            std::initializer_list<std::uint64_t> path);

    /// Child stream, independent of this stream's position.
    RngStream fork(std::uint64_t index) const;

    std::uint64_t key() const { return key_; }
    std::uint64_t position() const { return counter_; }

    /// Uniform double in [0, 1).
    double uniform();

    /// Standard normal via inverse CDF; consumes exactly one uniform.
    double normal();

    /// n independent standard normals, in order.
    Eigen::VectorXd normals(Eigen::Index n);

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

namespace detail {
std::uint64_t mix64(std::uint64_t z);
std::uint64_t chain_key(std::uint64_t key, std::uint64_t word);
double inverse_normal_cdf(double p);
}  // namespace detail

}  // namespace assim

#endif
