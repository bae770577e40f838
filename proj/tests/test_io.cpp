#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "tso/io.hpp"

using namespace tso;
using io::json;

namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

void expect_identical(const SurrogateBath& a, const SurrogateBath& b) {
    ASSERT_EQ(a.n_modes(), b.n_modes());
    EXPECT_EQ(a.unit, b.unit);
    EXPECT_EQ(a.dims, b.dims);
    for (std::size_t n = 0; n < a.n_modes(); ++n) {
        EXPECT_TRUE(same_bits(a.omega[n], b.omega[n]));
        EXPECT_TRUE(same_bits(a.gamma[n], b.gamma[n]));
        EXPECT_TRUE(same_bits(a.c[n].real(), b.c[n].real()));
        EXPECT_TRUE(same_bits(a.c[n].imag(), b.c[n].imag()));
        if (n + 1 < a.n_modes()) {
            EXPECT_TRUE(same_bits(a.g[n], b.g[n]));
        }
    }
}

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST(Numbers, ShortestFormRoundTrips) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::uint64_t> bits;
    int checked = 0;
    while (checked < 20000) {
        const std::uint64_t u = bits(rng);
        double x;
        std::memcpy(&x, &u, sizeof x);
        if (!std::isfinite(x)) continue;
        EXPECT_TRUE(same_bits(io::parse_double(io::format_double(x), "x"), x));
        ++checked;
    }
    EXPECT_EQ(io::format_double(0.1), "0.1");
    EXPECT_EQ(io::format_double(-2.0), "-2");
    EXPECT_THROW(io::parse_double("1.5x", "x"), ConfigError);
    EXPECT_THROW(io::parse_double("", "x"), ConfigError);
}

TEST(BathTable, CsvRoundTripIsBitExact) {
    for (const auto& p : presets::all()) {
        const std::string text = io::bath_to_csv(p.bath);
        const SurrogateBath back = io::bath_from_csv(text);
        expect_identical(p.bath, back);
        EXPECT_EQ(io::bath_to_csv(back), text) << p.name;
    }
}

TEST(BathTable, CsvLayout) {
    const SurrogateBath b{{1.5, 0.25}, {0.75}, {0.5, 0.125}, {{0.5, -0.25}, {1.0, 0.0}}, {}, Unit::cm1};
    EXPECT_EQ(io::bath_to_csv(b),
              "# unit: cm-1\n"
              "mode,Omega,g_to_next,Gamma,re_c,im_c,d_loc\n"
              "1,1.5,0.75,0.5,0.5,-0.25,\n"
              "2,0.25,,0.125,1,0,\n");
}

TEST(BathTable, JsonRoundTripIsBitExact) {
    for (const auto& p : presets::all()) {
        const std::string text = io::bath_to_json(p.bath).dump(2);
        const SurrogateBath back = io::bath_from_json(json::parse(text));
        expect_identical(p.bath, back);
        EXPECT_EQ(io::bath_to_json(back).dump(2), text) << p.name;
    }
}

TEST(BathTable, RejectsMalformedInput) {
    const std::string head = "# unit: omega_c\nmode,Omega,g_to_next,Gamma,re_c,im_c,d_loc\n";
    EXPECT_NE(error_of([] { io::bath_from_csv("mode,Omega,g_to_next,Gamma,re_c,im_c,d_loc\n1,1,,1,1,0,\n"); }).find("unit"),
              std::string::npos);
    EXPECT_NE(error_of([&] { io::bath_from_csv(head + "1,1,0.5,1,1,0,3\n2,1,,1,1,0,\n"); }).find("d_loc"), std::string::npos);
    EXPECT_NE(error_of([&] { io::bath_from_csv(head + "1,1,,1,abc,0,\n"); }).find("row 1 re_c"), std::string::npos);
    EXPECT_NE(error_of([&] { io::bath_from_csv(head + "1,1,,-1,1,0,\n"); }).find("positive"), std::string::npos);
    EXPECT_NE(error_of([&] { io::bath_from_csv(head + "1,1,,1,1,0.5,\n"); }).find("real"), std::string::npos);
    EXPECT_NE(error_of([&] { io::bath_from_csv(head + "1,1,,1,1\n"); }).find("fields"), std::string::npos);
    EXPECT_NE(error_of([] { io::bath_from_json(json::parse(R"({"unit":"omega_c","modes":[{"Omega":1,"Gamma":1}]})"), "/bath"); })
                  .find("/bath/modes/0/re_c"),
              std::string::npos);
}

TEST(FitTable, CsvRoundTripIsBitExact) {
    ExponentialFit f;
    f.rates = {{-0.125, 1.0 / 3.0}, {-2.0, -0.7}};
    f.weights = {{0.1, -1e-17}, {M_PI, 0.0}};
    f.residual = 3.3e-9;
    f.dt = 0.05;
    f.n_samples = 512;
    const std::string text = io::fit_to_csv(f);
    EXPECT_NE(text.find("re_lambda,im_lambda,re_w,im_w\n"), std::string::npos);
    const ExponentialFit g = io::fit_from_csv(text);
    ASSERT_EQ(g.n_terms(), 2u);
    for (std::size_t k = 0; k < 2; ++k) {
        EXPECT_TRUE(same_bits(f.rates[k].real(), g.rates[k].real()));
        EXPECT_TRUE(same_bits(f.rates[k].imag(), g.rates[k].imag()));
        EXPECT_TRUE(same_bits(f.weights[k].real(), g.weights[k].real()));
        EXPECT_TRUE(same_bits(f.weights[k].imag(), g.weights[k].imag()));
    }
    EXPECT_TRUE(same_bits(f.residual, g.residual));
    EXPECT_EQ(g.n_samples, 512u);
    EXPECT_EQ(io::fit_to_csv(g), text);
}

TEST(Config, BathSpecWithPaths) {
    const json j = json::parse(R"({"unit":"cm-1","kelvin":77,"components":[
        {"type":"adolphs_renger"},{"type":"lorentzian","center":215,"width":10,"huang_rhys":0.1}]})");
    const BathSpec s = io::bath_spec_from_config(j, "/bath");
    ASSERT_EQ(s.components.size(), 2u);
    EXPECT_DOUBLE_EQ(s.beta.get(), 1.0 / (0.6950348 * 77.0));
    EXPECT_DOUBLE_EQ(std::get<AdolphsRenger>(s.components[0]).cutoff1, 0.557);

    const json h = json::parse(R"({"unit":"100cm-1","kelvin":77,"components":[{"type":"adolphs_renger"}]})");
    const BathSpec t = io::bath_spec_from_config(h, "/bath");
    EXPECT_DOUBLE_EQ(std::get<AdolphsRenger>(t.components[0]).cutoff1, 0.00557);
    EXPECT_DOUBLE_EQ(t.beta.get(), 100.0 / (0.6950348 * 77.0));

    EXPECT_NE(error_of([] { io::bath_spec_from_config(json::parse(R"({"unit":"omega_c","components":[{"type":"ohmic"}]})"), "/bath"); })
                  .find("/bath/components/0/cutoff"),
              std::string::npos);
    EXPECT_NE(error_of([] { io::bath_spec_from_config(json::parse(R"({"unit":"eV","components":[]})"), "/bath"); }).find("/bath/unit"),
              std::string::npos);
    EXPECT_NE(error_of([] {
                  io::bath_spec_from_config(json::parse(R"({"unit":"omega_c","beta":1,"temperature":1,"components":[{"type":"ohmic","cutoff":1}]})"),
                                            "/bath");
              }).find("one of"),
              std::string::npos);
    EXPECT_TRUE(io::bath_spec_from_config(json::parse(R"({"unit":"omega_c","components":[{"type":"ohmic","cutoff":1}]})"), "")
                    .beta.is_infinite());
}

TEST(Config, SurrogateSources) {
    const SurrogateBath p = io::surrogate_from_config(json::parse(R"({"preset":"ohmic_t1","dims":[3,3,3,3]})"), "/bath");
    EXPECT_EQ(p.dims, (std::vector<int>{3, 3, 3, 3}));
    EXPECT_EQ(p.omega, presets::ohmic_t1().omega);
    EXPECT_NE(error_of([] { io::surrogate_from_config(json::parse(R"({"preset":"nope"})"), "/bath"); }).find("/bath/preset"),
              std::string::npos);
    EXPECT_NE(error_of([] { io::surrogate_from_config(json::parse(R"({"preset":"ohmic_t1","dims":[3,3]})"), "/bath"); }).find("/bath/dims"),
              std::string::npos);

    const auto dir = std::filesystem::temp_directory_path() / "tso_io_test";
    io::write_file(dir / "b.csv", io::bath_to_csv(presets::adolphs_renger_77k()));
    const SurrogateBath f = io::surrogate_from_config(json::parse(R"({"file":"b.csv"})"), "/bath", dir);
    expect_identical(f, presets::adolphs_renger_77k());
    std::filesystem::remove_all(dir);
}

TEST(Manifest, HashIsCanonical) {
    EXPECT_EQ(io::fnv1a(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(io::fnv1a("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(io::fnv1a("foobar"), 0x85944171f73967e8ULL);
    const json a = json::parse(R"({"x": 1, "y": [1, 2]})");
    const json b = json::parse("{\"y\":[1,2],\n \"x\":1}");
    EXPECT_EQ(io::config_hash(a), io::config_hash(b));
    EXPECT_NE(io::config_hash(a), io::config_hash(json::parse(R"({"x":2,"y":[1,2]})")));
    const json m = io::manifest("simulate", a, 42);
    EXPECT_EQ(m["seed"], 42);
    EXPECT_EQ(m["versions"]["tso"], io::version);
    EXPECT_EQ(io::manifest("simulate", b, 42), m);
}

TEST(Tables, TrajectoryAndSpectrumLayout) {
    Trajectory tr;
    tr.t = {0.0, 0.5};
    tr.observable_names = {"p1", "c"};
    tr.observables = {{{1.0, 0.0}, {0.75, 0.0}}, {{0.0, 0.5}, {-0.25, 0.125}}};
    EXPECT_EQ(io::trajectory_csv(tr), "t,p1_re,p1_im,c_re,c_im\n0,1,0,0,0.5\n0.5,0.75,0,-0.25,0.125\n");
    EXPECT_EQ(io::spectrum_csv({1.0, 2.0}, {0.5, 0.25}), "omega,S_abs\n1,0.5\n2,0.25\n");
    EXPECT_EQ(io::complex_series_csv({0.0}, {{2.0, -1.0}}, "C"), "t,C_re,C_im\n0,2,-1\n");
    EXPECT_THROW(io::spectrum_csv({1.0}, {}), ContractError);
}
