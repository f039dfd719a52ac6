// Unit tests for class prototypes, the cosine knowledge matrix, and the
// nearest-class-mean classifier.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "crl/prototypes.hpp"
#include "crl/rng.hpp"

using namespace crl;

namespace {

Vec random_unit(std::size_t dim, Rng& rng) {
    Vec v(dim);
    for (auto& x : v) x = rng.normal();
    double n = std::sqrt(squared_norm(v));
    for (auto& x : v) x /= n;
    return v;
}

}  // namespace

TEST_CASE("compute_prototypes: one member per class is the member itself") {
    std::vector<ClassMembers> members = {{3, {{0.6, 0.8}}}, {7, {{1.0, 0.0}}}};
    PrototypeSet ps = compute_prototypes(members);
    CHECK(ps.class_ids == std::vector<int>{3, 7});
    CHECK(ps.vectors[0] == Vec{0.6, 0.8});
    CHECK(ps.vectors[1] == Vec{1.0, 0.0});
    CHECK(ps.counts == std::vector<std::size_t>{1, 1});
}

TEST_CASE("compute_prototypes: mean of two basis vectors") {
    std::vector<ClassMembers> members = {{0, {{1.0, 0.0}, {0.0, 1.0}}}};
    PrototypeSet ps = compute_prototypes(members);
    CHECK(ps.vectors[0][0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(ps.vectors[0][1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(ps.counts[0] == 2);
}

TEST_CASE("compute_prototypes: matches a naive accumulation oracle") {
    Rng rng(61);
    std::vector<ClassMembers> members;
    for (int c = 0; c < 3; ++c) {
        ClassMembers cm;
        cm.class_id = c;
        for (int i = 0; i < 5; ++i) cm.embeddings.push_back(random_unit(4, rng));
        members.push_back(cm);
    }
    PrototypeSet ps = compute_prototypes(members);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t d = 0; d < 4; ++d) {
            double sum = 0.0;
            for (const Vec& z : members[c].embeddings) sum += z[d];
            CHECK(ps.vectors[c][d] == doctest::Approx(sum / 5.0).epsilon(1e-12));
        }
        CHECK(ps.counts[c] == 5);
    }
}

TEST_CASE("compute_prototypes: empty class or empty input is rejected") {
    CHECK_THROWS_AS(compute_prototypes({}), std::invalid_argument);
    std::vector<ClassMembers> members = {{0, {}}};
    CHECK_THROWS_AS(compute_prototypes(members), std::invalid_argument);
    std::vector<ClassMembers> ragged = {{0, {{1.0, 0.0}, {1.0, 0.0, 0.0}}}};
    CHECK_THROWS_AS(compute_prototypes(ragged), std::invalid_argument);
}

TEST_CASE("cosine_knowledge: orthogonal prototypes") {
    PrototypeSet ps;
    ps.class_ids = {0, 1};
    ps.vectors = {{1.0, 0.0}, {0.0, 1.0}};
    ps.counts = {1, 1};
    KnowledgeMatrix km = cosine_knowledge(ps);
    CHECK(km.a.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(km.a.at(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(km.a.at(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(km.a.at(1, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(km.class_ids == ps.class_ids);
}

TEST_CASE("cosine_knowledge: antiparallel prototypes give -1") {
    PrototypeSet ps;
    ps.class_ids = {0, 1};
    ps.vectors = {{0.3, -0.4}, {-0.3, 0.4}};
    ps.counts = {1, 1};
    KnowledgeMatrix km = cosine_knowledge(ps);
    CHECK(km.a.at(0, 1) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("cosine_knowledge: invariant to positive scaling of any prototype") {
    Rng rng(62);
    PrototypeSet ps;
    ps.class_ids = {0, 1, 2};
    ps.vectors = {random_unit(3, rng), random_unit(3, rng), random_unit(3, rng)};
    ps.counts = {1, 1, 1};
    KnowledgeMatrix base = cosine_knowledge(ps);

    PrototypeSet scaled = ps;
    for (double& v : scaled.vectors[1]) v *= 7.0;
    KnowledgeMatrix km = cosine_knowledge(scaled);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(km.a.at(i, j) == doctest::Approx(base.a.at(i, j)).epsilon(1e-9));
}

TEST_CASE("cosine_knowledge: symmetric, unit diagonal, entries in [-1, 1]") {
    Rng rng(63);
    PrototypeSet ps;
    for (int c = 0; c < 5; ++c) {
        ps.class_ids.push_back(c);
        Vec v(4);
        for (auto& x : v) x = rng.normal() * 2.0;
        ps.vectors.push_back(v);
        ps.counts.push_back(1);
    }
    KnowledgeMatrix km = cosine_knowledge(ps);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(km.a.at(i, i) == doctest::Approx(1.0).epsilon(1e-9));
        for (std::size_t j = 0; j < 5; ++j) {
            CHECK(km.a.at(i, j) == doctest::Approx(km.a.at(j, i)).epsilon(1e-9));
            CHECK(km.a.at(i, j) >= -1.0 - 1e-12);
            CHECK(km.a.at(i, j) <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("cosine_knowledge: zero-norm prototype is rejected") {
    PrototypeSet ps;
    ps.class_ids = {0, 1};
    ps.vectors = {{1.0, 0.0}, {0.0, 0.0}};
    ps.counts = {1, 1};
    CHECK_THROWS_AS(cosine_knowledge(ps), std::invalid_argument);
    PrototypeSet empty;
    CHECK_THROWS_AS(cosine_knowledge(empty), std::invalid_argument);
}

TEST_CASE("ncm_predict: picks the nearest prototype") {
    PrototypeSet ps;
    ps.class_ids = {0, 1};
    ps.vectors = {{1.0, 0.0}, {0.0, 1.0}};
    ps.counts = {1, 1};
    CHECK(ncm_predict(Vec{0.9, 0.1}, ps) == 0);
    CHECK(ncm_predict(Vec{0.1, 0.9}, ps) == 1);
}

TEST_CASE("ncm_predict: single class always wins") {
    PrototypeSet ps;
    ps.class_ids = {42};
    ps.vectors = {{1.0, 0.0}};
    ps.counts = {1};
    CHECK(ncm_predict(Vec{-1.0, 0.0}, ps) == 42);
    CHECK(ncm_predict(Vec{0.0, 0.0}, ps) == 42);
}

TEST_CASE("ncm_predict: exact ties go to the smallest class id") {
    PrototypeSet ps;
    ps.class_ids = {9, 2};
    ps.vectors = {{1.0, 0.0}, {-1.0, 0.0}};
    ps.counts = {1, 1};
    CHECK(ncm_predict(Vec{0.0, 0.0}, ps) == 2);
    CHECK(ncm_predict(Vec{0.0, 5.0}, ps) == 2);
}

TEST_CASE("ncm_predict: agrees with a brute-force distance scan on 100 queries") {
    Rng rng(64);
    PrototypeSet ps;
    for (int c = 0; c < 7; ++c) {
        ps.class_ids.push_back(c * 3);  // non-contiguous ids
        ps.vectors.push_back(random_unit(5, rng));
        ps.counts.push_back(1);
    }
    for (int trial = 0; trial < 100; ++trial) {
        Vec q = random_unit(5, rng);
        double best = std::numeric_limits<double>::infinity();
        int best_class = std::numeric_limits<int>::max();
        for (std::size_t c = 0; c < ps.size(); ++c) {
            double d = squared_distance(q, ps.vectors[c]);
            if (d < best || (d == best && ps.class_ids[c] < best_class)) {
                best = d;
                best_class = ps.class_ids[c];
            }
        }
        CHECK(ncm_predict(q, ps) == best_class);
    }
}

TEST_CASE("ncm_predict: rejects empty set and mismatched dimensions") {
    PrototypeSet empty;
    CHECK_THROWS_AS(ncm_predict(Vec{1.0}, empty), std::invalid_argument);
    PrototypeSet ps;
    ps.class_ids = {0};
    ps.vectors = {{1.0, 0.0}};
    ps.counts = {1};
    CHECK_THROWS_AS(ncm_predict(Vec{1.0, 0.0, 0.0}, ps), std::invalid_argument);
}

TEST_CASE("ncm_predict: invariant under a shared orthogonal transform") {
    Rng rng(65);
    const std::size_t d = 4;
    PrototypeSet ps;
    for (int c = 0; c < 5; ++c) {
        ps.class_ids.push_back(c);
        ps.vectors.push_back(random_unit(d, rng));
        ps.counts.push_back(1);
    }

    // Random rotation via Gram-Schmidt on a Gaussian matrix.
    std::vector<Vec> rot(d, Vec(d));
    for (auto& row : rot)
        for (auto& v : row) v = rng.normal();
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            double proj = dot(rot[i], rot[j]);
            axpy(-proj, rot[j], rot[i]);
        }
        double n = std::sqrt(squared_norm(rot[i]));
        for (auto& v : rot[i]) v /= n;
    }
    auto apply = [&](const Vec& v) {
        Vec out(d, 0.0);
        for (std::size_t i = 0; i < d; ++i) out[i] = dot(rot[i], v);
        return out;
    };

    PrototypeSet rotated = ps;
    for (auto& v : rotated.vectors) v = apply(v);
    for (int trial = 0; trial < 50; ++trial) {
        Vec q = random_unit(d, rng);
        CHECK(ncm_predict(q, ps) == ncm_predict(apply(q), rotated));
    }
}

TEST_CASE("ncm_predict: a prototype classifies as its own class") {
    Rng rng(66);
    PrototypeSet ps;
    for (int c = 0; c < 6; ++c) {
        ps.class_ids.push_back(c);
        ps.vectors.push_back(random_unit(3, rng));
        ps.counts.push_back(1);
    }
    for (std::size_t c = 0; c < ps.size(); ++c)
        CHECK(ncm_predict(ps.vectors[c], ps) == ps.class_ids[c]);
}
