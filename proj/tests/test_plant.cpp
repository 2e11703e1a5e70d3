#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "support.hpp"
#include "tsm/plant.hpp"

using namespace tsm;
using Catch::Approx;

namespace {
const HysteresisParams kMean{0.583, -1.444, 1.688, -1.043};
}

TEST_CASE("gamma_from_geometry", "[plant]") {
    CHECK(gamma_from_geometry(geometry_from_wrap(0.0), Direction::pull) == 1.0);
    CHECK(gamma_from_geometry(geometry_from_wrap(0.5394), Direction::pull) == Approx(std::exp(-0.5394)));
    CHECK(gamma_from_geometry(geometry_from_wrap(0.5394), Direction::pull) == Approx(0.5830).margin(2e-4));
    CHECK(gamma_from_geometry(geometry_from_wrap(0.5394, 2), Direction::pull) == Approx(std::exp(-2 * 0.5394)));
    CHECK(gamma_from_geometry(geometry_from_wrap(0.5394, 2), Direction::pull) == Approx(0.3399).margin(2e-4));

    PlantGeometry g{0.2, 2.697, 1};  // same wrap, split into mu and phi
    CHECK(gamma_from_geometry(g, Direction::release) == Approx(std::exp(0.5394)));

    CHECK_THROWS_AS(gamma_from_geometry({-0.1, 1.0, 1}, Direction::pull), std::invalid_argument);
    CHECK_THROWS_AS(gamma_from_geometry({0.1, 1.0, 3}, Direction::pull), std::invalid_argument);
}

TEST_CASE("params_from_geometry", "[plant]") {
    CHECK(params_from_geometry(geometry_from_wrap(0.0), 0, 0) == HysteresisParams{1, 0, 1, 0});

    auto p = params_from_geometry(geometry_from_wrap(0.5394), -1.444, -1.043);
    CHECK(p.gamma_p == Approx(0.583).margin(1e-3));
    // Coulomb symmetry puts the release slope at 1/0.583, not at the measured 1.688
    CHECK(p.gamma_r == Approx(1.0 / 0.583).margin(1e-3));
    CHECK(p.gamma_p * p.gamma_r == Approx(1.0));
    CHECK(p.beta_p == -1.444);
    CHECK(p.beta_r == -1.043);

    p = params_from_geometry(geometry_from_wrap(0.5394, 2), 0, 0);
    CHECK(p.gamma_p == Approx(0.3399).margin(2e-4));
    CHECK(p.gamma_r == Approx(2.9419).margin(1e-3));
}

TEST_CASE("slope product and monotone attenuation", "[plant]") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> wrap(0.0, 2.0);
    for (int i = 0; i < 200; ++i) {
        const double w = wrap(rng);
        const auto g = geometry_from_wrap(w, 1 + i % 2);
        CHECK(gamma_from_geometry(g, Direction::pull) * gamma_from_geometry(g, Direction::release) ==
              Approx(1.0).epsilon(1e-14));
        const auto g2 = geometry_from_wrap(w + 0.01, 1 + i % 2);
        CHECK(gamma_from_geometry(g2, Direction::pull) < gamma_from_geometry(g, Direction::pull));
        CHECK(gamma_from_geometry(g2, Direction::release) > gamma_from_geometry(g, Direction::release));
    }
}

TEST_CASE("plant_step examples", "[plant]") {
    const HysteresisParams p{0.5, 0, 2.0, 0};
    auto s = initial_state(p, 20.0);
    CHECK(s.t_out_held == 10.0);
    auto st = plant_step(p, s, 20.0);
    CHECK(st.t_out == 10.0);
    CHECK(st.state.phase == Phase::PP);

    // reversal at 20, descend: held at 10 until the release line reaches it at 5
    s = st.state;
    for (double t = 19.0; t > 5.0; t -= 1.0) {
        st = plant_step(p, s, t);
        s = st.state;
        CHECK(s.phase == Phase::RB);
        CHECK(st.t_out == 10.0);
        CHECK(s.t_in_rev == 20.0);
    }
    st = plant_step(p, s, 5.0);
    CHECK(st.state.phase == Phase::RP);
    CHECK(st.t_out == 10.0);
    st = plant_step(p, st.state, 4.0);
    CHECK(st.t_out == 8.0);

    const auto m = plant_step(kMean, initial_state(kMean, 19.0), 20.0);
    CHECK(m.t_out == Approx(10.216).margin(1e-12));
}

TEST_CASE("plant_step rejects malformed input", "[plant]") {
    const auto s = initial_state(kMean, 10.0);
    CHECK_THROWS_AS(plant_step(kMean, s, std::nan("")), std::invalid_argument);
    CHECK_THROWS_AS(plant_step(kMean, s, std::numeric_limits<double>::infinity()), std::invalid_argument);
    CHECK_THROWS_AS(plant_step(kMean, s, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(initial_state(kMean, -1.0), std::invalid_argument);
}

TEST_CASE("plant agrees with the play-operator oracle", "[plant]") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> gp(0.4, 1.0), bias(-2.0, 0.0), step(-0.4, 0.4);
    for (int trial = 0; trial < 50; ++trial) {
        const double g = gp(rng);
        HysteresisParams p{g, bias(rng), 1.0 / g, 0.0};
        // keep the release line above the pull line on the whole domain
        p.beta_r = p.beta_p + 0.5;
        std::vector<double> x{20.0};
        for (int k = 1; k < 3000; ++k) x.push_back(std::clamp(x.back() + step(rng), 5.0, 50.0));
        const auto run = run_plant(p, x, 0.002);
        const auto ref = testsup::play_operator(p.gamma_p, p.beta_p, p.gamma_r, p.beta_r, x);
        for (std::size_t k = 0; k < x.size(); ++k) REQUIRE(run.trace.t_out[k] == Approx(ref[k]).margin(1e-12));
    }
}

TEST_CASE("backlash holds and exits continuously", "[plant]") {
    const auto x = testsup::triangle(5, 35, 2000, 3);
    const double max_step = 30.0 / 1000.0;
    const auto run = run_plant(kMean, x, 0.002);
    int backlash_runs = 0;
    for (std::size_t k = 1; k < x.size(); ++k) {
        const Phase ph = run.phases[k], prev = run.phases[k - 1];
        if (is_backlash(ph) && is_backlash(prev)) CHECK(run.trace.t_out[k] == run.trace.t_out[k - 1]);
        if (is_backlash(prev) && !is_backlash(ph)) {
            ++backlash_runs;
            const Direction d = ph == Phase::PP ? Direction::pull : Direction::release;
            CHECK(std::abs(kMean.line(d, x[k]) - run.trace.t_out[k - 1]) <= kMean.gamma(d) * max_step + 1e-12);
        }
    }
    CHECK(backlash_runs == 5);
}

TEST_CASE("identity plant is transparent", "[plant]") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 60.0);
    std::vector<double> x(500);
    for (auto& v : x) v = u(rng);
    const auto run = run_plant(params_from_geometry(geometry_from_wrap(0.0), 0, 0), x, 0.002);
    CHECK(run.trace.t_out == x);
}

TEST_CASE("flat input does not reverse", "[plant]") {
    std::vector<double> x{10, 11, 12, 12, 12 + 5e-10, 12, 13};
    const auto run = run_plant(kMean, x, 0.002);
    for (auto ph : run.phases) CHECK(ph == Phase::PP);
}

TEST_CASE("sstl_twin", "[plant]") {
    const auto s = sstl_twin(kMean);
    CHECK(s.gamma_p == Approx(0.735 * 0.583 * 0.583 + 0.019));
    CHECK(s.gamma_p == Approx(0.2688).margin(5e-5));
    CHECK(s.gamma_r == Approx(3.3212).margin(5e-5));
    CHECK(s.beta_p == 0.033);
    CHECK(s.beta_r == 4.366);

    SstlTwinSpec ideal;
    ideal.pull = {1, 0};
    ideal.release = {1, 0};
    CHECK(sstl_twin({0.6, 0, 1 / 0.6, 0}, ideal).gamma_p == Approx(0.36));

    SstlTwinSpec bad;
    bad.pull = {3.0, 0.0};
    CHECK_THROWS_AS(sstl_twin(kMean, bad), std::invalid_argument);
    bad = {};
    bad.release = {0.1, 0.0};
    CHECK_THROWS_AS(sstl_twin(kMean, bad), std::invalid_argument);
}

TEST_CASE("simulate_trace", "[plant]") {
    const std::vector<double> flat(200, 12.0);
    const auto c = simulate_trace(kMean, flat, 0.002, 0.0, 1);
    for (double v : c.t_out) CHECK(v == c.t_out.front());

    const auto x = testsup::trapezoid(5, 25, 12);
    const auto clean = simulate_trace(kMean, x, 0.002, 0.0, 1);
    CHECK(clean.size() == 6000);
    const auto run = run_plant(kMean, x, 0.002);
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (run.phases[k] == Phase::PP) REQUIRE(clean.t_out[k] == Approx(kMean.line(Direction::pull, x[k])));
        if (run.phases[k] == Phase::RP) REQUIRE(clean.t_out[k] == Approx(kMean.line(Direction::release, x[k])));
    }

    const auto a = simulate_trace(kMean, x, 0.002, 0.05, 9);
    const auto b = simulate_trace(kMean, x, 0.002, 0.05, 9);
    CHECK(a.t_in == b.t_in);
    CHECK(a.t_out == b.t_out);
    const auto other = simulate_trace(kMean, x, 0.002, 0.05, 10);
    CHECK(a.t_out != other.t_out);

    double sum = 0, sq = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double e = a.t_in[k] - x[k];
        sum += e;
        sq += e * e;
    }
    CHECK(std::abs(sum / 6000) < 0.005);
    CHECK(std::sqrt(sq / 6000) == Approx(0.05).epsilon(0.1));

    CHECK_THROWS_AS(simulate_trace(kMean, std::vector<double>{}, 0.002, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(simulate_trace(kMean, std::vector<double>{1, -1}, 0.002, 0, 1), std::invalid_argument);
}

TEST_CASE("tracking lag", "[plant]") {
    TrackingLag ideal(0.0, 0.002);
    CHECK(ideal.track(3.0) == 3.0);
    CHECK(ideal.track(7.0) == 7.0);

    TrackingLag lag(0.05, 0.002);
    CHECK(lag.track(10.0) == 10.0);
    double v = 0;
    for (int k = 0; k < 25; ++k) v = lag.track(20.0);  // one time constant
    CHECK(v == Approx(20.0 - 10.0 * std::pow(0.05 / 0.052, 25)));
    CHECK(v > 15.0);
    CHECK(v < 17.0);
}

TEST_CASE("trace CSV round trip", "[plant]") {
    const auto tr = simulate_trace(kMean, testsup::trapezoid(5, 25, 1), 0.002, 0.05, 2);
    std::stringstream ss;
    write_trace_csv(ss, tr);
    std::string header;
    std::getline(std::stringstream(ss.str()), header);
    CHECK(header == "time_s,t_in_N,t_out_N");

    const auto back = read_trace_csv(ss);
    REQUIRE(back.size() == tr.size());
    CHECK(back.dt == Approx(0.002).margin(1e-12));
    for (std::size_t k = 0; k < tr.size(); ++k) {
        CHECK(back.t_in[k] == Approx(tr.t_in[k]).margin(5e-7));
        CHECK(back.t_out[k] == Approx(tr.t_out[k]).margin(5e-7));
    }

    std::stringstream wrong("time,a,b\n0,1,2\n");
    CHECK_THROWS_AS(read_trace_csv(wrong), IoError);
    std::stringstream junk("time_s,t_in_N,t_out_N\n0,1,x\n");
    CHECK_THROWS_AS(read_trace_csv(junk), IoError);
    std::stringstream neg("time_s,t_in_N,t_out_N\n0,1,-2\n0.002,1,1\n");
    CHECK_THROWS_AS(read_trace_csv(neg), IoError);
}
