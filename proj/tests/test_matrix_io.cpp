#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "modforge/error.hpp"
#include "modforge/matrix_io.hpp"
#include "modforge/npy.hpp"
#include "oracles.hpp"

using namespace modforge;

namespace {

// Hand-assembles an .npy byte stream so the reader is checked against the
// container layout itself rather than against our own writer.
std::string npy_bytes(int major, const std::string& dict, const std::string& payload) {
    std::string header = dict;
    const std::size_t prefix = major == 1 ? 10 : 12;
    while ((prefix + header.size() + 1) % 64 != 0) header += ' ';
    header += '\n';
    std::string out = "\x93NUMPY";
    out += static_cast<char>(major);
    out += '\0';
    const std::uint32_t len = static_cast<std::uint32_t>(header.size());
    if (major == 1) {
        out += static_cast<char>(len & 0xFF);
        out += static_cast<char>(len >> 8);
    } else {
        for (int i = 0; i < 4; ++i) out += static_cast<char>((len >> (8 * i)) & 0xFF);
    }
    return out + header + payload;
}

template <typename T>
std::string raw(const std::vector<T>& v) {
    std::string s(v.size() * sizeof(T), '\0');
    std::memcpy(s.data(), v.data(), s.size());
    return s;
}

void write_file(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream(p, std::ios::binary) << bytes;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

MatrixMeta default_meta(std::size_t n, std::size_t m) {
    MatrixMeta meta;
    for (std::size_t i = 0; i < n; ++i) meta.neurons.push_back({0, static_cast<std::uint32_t>(i)});
    for (std::size_t j = 0; j < m; ++j) meta.samples.push_back({"s" + std::to_string(j), std::nullopt, std::nullopt});
    return meta;
}

}  // namespace

TEST_CASE("npy reader decodes hand-built v1.0 f8 and v2.0 f4 containers") {
    {
        std::istringstream in(npy_bytes(1, "{'descr': '<f8', 'fortran_order': False, 'shape': (2, 3), }",
                                        raw<double>({1, 2, 3, 4, 5, 6})));
        const auto m = npy::read(in);
        CHECK(m.source_dtype == npy::Dtype::f64);
        REQUIRE(m.values.rows() == 2);
        REQUIRE(m.values.cols() == 3);
        CHECK(m.values(1, 2) == 6.0);
    }
    {
        std::istringstream in(npy_bytes(2, "{'descr': '<f4', 'fortran_order': False, 'shape': (1, 2), }",
                                        raw<float>({0.5f, -2.25f})));
        const auto m = npy::read(in);
        CHECK(m.source_dtype == npy::Dtype::f32);
        CHECK(m.values(0, 1) == -2.25);
    }
}

TEST_CASE("npy reader rejects format violations") {
    const std::string payload = raw<double>({1, 2});
    auto bad = [](const std::string& bytes) {
        std::istringstream in(bytes);
        CHECK_THROWS_AS(npy::read(in), DataError);
    };
    bad("not an npy file at all");
    bad(npy_bytes(1, "{'descr': '<f8', 'fortran_order': True, 'shape': (1, 2), }", payload));
    bad(npy_bytes(1, "{'descr': '<f8', 'fortran_order': False, 'shape': (2,), }", payload));
    bad(npy_bytes(1, "{'descr': '<i8', 'fortran_order': False, 'shape': (1, 2), }", payload));
    bad(npy_bytes(1, "{'descr': '>f8', 'fortran_order': False, 'shape': (1, 2), }", payload));
    bad(npy_bytes(1, "{'descr': '<f8', 'fortran_order': False, 'shape': (2, 2), }", payload));
}

TEST_CASE("npy writer pads the header to 64 bytes and round-trips bit-exactly") {
    const auto a = oracle::random_matrix(4, 4, 3, -1e6, 1e6);
    std::ostringstream out;
    npy::write(out, a);
    const std::string bytes = out.str();
    const std::size_t header_len = static_cast<unsigned char>(bytes[8]) | (static_cast<unsigned char>(bytes[9]) << 8);
    CHECK((10 + header_len) % 64 == 0);
    std::istringstream in(bytes);
    CHECK(npy::read(in).values == a);
}

TEST_CASE("load_matrix accepts a valid 2x3 matrix") {
    const auto dir = oracle::scratch_dir("io_valid");
    npy::write(dir / "a.npy", oracle::random_matrix(2, 3, 1));
    write_metadata(dir / "a.json", default_meta(2, 3));
    const auto m = load_matrix(dir / "a.npy", dir / "a.json");
    CHECK(m.num_neurons() == 2);
    CHECK(m.num_samples() == 3);
    CHECK_FALSE(m.normalized());
}

TEST_CASE("load_matrix rejects dimension mismatches and non-finite values") {
    const auto dir = oracle::scratch_dir("io_errors");
    npy::write(dir / "a.npy", oracle::random_matrix(2, 3, 1));
    write_metadata(dir / "three.json", default_meta(3, 3));
    CHECK_THROWS_AS(load_matrix(dir / "a.npy", dir / "three.json"), DataError);

    DenseMatrix bad(2, 3, 0.0);
    bad(0, 1) = std::nan("");
    npy::write(dir / "nan.npy", bad);
    write_metadata(dir / "ok.json", default_meta(2, 3));
    try {
        load_matrix(dir / "nan.npy", dir / "ok.json");
        FAIL("expected a DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("(0,1)") != std::string::npos);
    }

    write_file(dir / "broken.json", "{\"neurons\": [");
    CHECK_THROWS_AS(load_matrix(dir / "a.npy", dir / "broken.json"), DataError);
    CHECK_THROWS_AS(load_matrix(dir / "missing.npy", dir / "ok.json"), DataError);
}

TEST_CASE("metadata validation") {
    auto meta = default_meta(2, 2);
    meta.samples[1].id = "s0";
    CHECK_THROWS_AS(ActivationMatrix(DenseMatrix(2, 2, 0.0), meta.neurons, meta.samples), DataError);
    meta = default_meta(2, 2);
    meta.neurons[1] = meta.neurons[0];
    CHECK_THROWS_AS(ActivationMatrix(DenseMatrix(2, 2, 0.0), meta.neurons, meta.samples), DataError);
    meta = default_meta(2, 2);
    meta.samples[0].token_count = 0;
    CHECK_THROWS_AS(ActivationMatrix(DenseMatrix(2, 2, 0.0), meta.neurons, meta.samples), DataError);
}

TEST_CASE("save then load is the identity") {
    const auto dir = oracle::scratch_dir("io_roundtrip");
    std::vector<NeuronMeta> neurons{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    std::vector<SampleMeta> samples{{"a", "Math", 12}, {"b", std::nullopt, 3}, {"c", "Code", std::nullopt}, {"d", "Math", 1}};
    const ActivationMatrix m(oracle::random_matrix(4, 4, 42, -5, 5), neurons, samples);
    save_matrix(m, dir / "m.npy", dir / "m.json");
    const auto back = load_matrix(dir / "m.npy", dir / "m.json");
    CHECK(back.values() == m.values());
    CHECK(back.neurons() == neurons);
    CHECK(back.samples() == samples);
    CHECK_FALSE(back.normalized());

    const auto z = zscore_normalize(m).first;
    save_matrix(z, dir / "z.npy", dir / "z.json");
    const auto zb = load_matrix(dir / "z.npy", dir / "z.json");
    CHECK(zb.normalized());
    CHECK(zb.values() == z.values());
}

TEST_CASE("save to an unwritable path fails") {
    const auto m = ActivationMatrix::with_default_meta(DenseMatrix(2, 2, 1.0));
    CHECK_THROWS_AS(save_matrix(m, "/nonexistent_dir/x.npy", "/nonexistent_dir/x.json"), DataError);
}

TEST_CASE("z-score examples") {
    const auto m = ActivationMatrix::with_default_meta(
        oracle::from_rows({{1, 3, 1, 3}, {5, 5, 5, 5}, {0, 2, 4, 6}}));
    const auto [z, stats] = zscore_normalize(m);
    CHECK(z.normalized());
    CHECK(stats.mean[0] == 2.0);
    CHECK(stats.std[0] == 1.0);
    CHECK(z.values()(0, 0) == -1.0);
    CHECK(z.values()(0, 1) == 1.0);
    CHECK(stats.std[1] == 0.0);
    for (std::size_t j = 0; j < 4; ++j) CHECK(z.values()(1, j) == 0.0);
    CHECK(stats.mean[2] == 3.0);
    CHECK(stats.std[2] == doctest::Approx(std::sqrt(5.0)).epsilon(1e-15));
    const double r5 = std::sqrt(5.0);
    const double want[] = {-3 / r5, -1 / r5, 1 / r5, 3 / r5};
    for (std::size_t j = 0; j < 4; ++j) CHECK(z.values()(2, j) == doctest::Approx(want[j]).epsilon(1e-14));

    CHECK_THROWS_AS(zscore_normalize(z), UsageError);
    CHECK_THROWS_AS(zscore_normalize(ActivationMatrix::with_default_meta(DenseMatrix(3, 1, 1.0))), UsageError);
}

TEST_CASE("property: normalized rows are standardized and invariant to positive affine maps") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng.below(10), m = 2 + rng.below(30);
        auto a = oracle::random_matrix(n, m, 900 + trial, -10, 10);
        if (trial % 4 == 0)
            for (std::size_t j = 0; j < m; ++j) a(0, j) = 7.5;  // a dead row
        const auto z = zscore_normalize(ActivationMatrix::with_default_meta(a)).first;
        for (std::size_t i = 0; i < n; ++i) {
            double mean = 0, sq = 0;
            for (std::size_t j = 0; j < m; ++j) mean += z.values()(i, j);
            mean /= m;
            for (std::size_t j = 0; j < m; ++j) sq += (z.values()(i, j) - mean) * (z.values()(i, j) - mean);
            const double sd = std::sqrt(sq / m);
            CHECK(std::abs(mean) <= 1e-6);
            if (trial % 4 == 0 && i == 0)
                CHECK(sd == 0.0);
            else
                CHECK(std::abs(sd - 1.0) <= 1e-6);
        }
        const double c = 0.1 + 5 * rng.uniform(), d = -3 + 6 * rng.uniform();
        DenseMatrix b = a;
        for (std::size_t j = 0; j < m; ++j) b(n - 1, j) = c * a(n - 1, j) + d;
        const auto zb = zscore_normalize(ActivationMatrix::with_default_meta(b)).first;
        for (std::size_t j = 0; j < m; ++j)
            CHECK(zb.values()(n - 1, j) == doctest::Approx(z.values()(n - 1, j)).epsilon(1e-9));
    }
}

TEST_CASE("a matrix flagged normalized must actually be standardized") {
    CHECK_THROWS_AS(ActivationMatrix::with_default_meta(oracle::from_rows({{1, 2}}), true), DataError);
    CHECK_NOTHROW(ActivationMatrix::with_default_meta(oracle::from_rows({{-1, 1}, {0, 0}}), true));
}

TEST_CASE("f32 payloads are widened on load") {
    const auto dir = oracle::scratch_dir("io_f32");
    npy::write(dir / "a.npy", oracle::from_rows({{0.1, 0.2}}), npy::Dtype::f32);
    const auto m = npy::read(dir / "a.npy");
    CHECK(m.source_dtype == npy::Dtype::f32);
    CHECK(m.values(0, 0) == static_cast<double>(0.1f));
    CHECK((read_file(dir / "a.npy").size() - 8) % 64 == 0);
}
