#include <doctest.h>

#include <sstream>

#include "eeml/checks.hpp"
#include "eeml/matrix.hpp"

using namespace eeml;

TEST_CASE("verify suite: zero failures and byte-identical output for a fixed seed") {
    std::ostringstream a, b;
    CHECK(checks::run_verify(a, 5, 5) == 0);
    CHECK(checks::run_verify(b, 5, 5) == 0);
    CHECK(a.str() == b.str());
    CHECK(a.str().find("seed=5") != std::string::npos);
}

TEST_CASE("gradcheck suite: zero failures and byte-identical output for a fixed seed") {
    std::ostringstream a, b;
    CHECK(checks::run_gradcheck(a, 11, 1e-5) == 0);
    CHECK(checks::run_gradcheck(b, 11, 1e-5) == 0);
    CHECK(a.str() == b.str());
}

TEST_CASE("oracle sanity: the composite reference at k=0 is the causal reference") {
    Prng rng(3);
    AttentionWeights w;
    const std::size_t h = 6;
    w.wq = gaussian_init(rng, h, h, 0.3);
    w.wk = gaussian_init(rng, h, h, 0.3);
    w.wv = gaussian_init(rng, h, h, 0.3);
    w.wo = gaussian_init(rng, h, h, 0.3);
    w.heads = 2;
    const Matrix text = uniform_init(rng, 5, h, -1.0, 1.0);
    const Matrix a = checks::reference_composite_attention(Matrix(0, h), text, w);
    const Matrix b = checks::reference_self_attention(text, w);
    CHECK(approx_equal(a, b, 1e-12).within);
}
