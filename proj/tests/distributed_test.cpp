#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "phasebal/distributed.hpp"
#include "phasebal/errors.hpp"
#include "phasebal/simulation.hpp"
#include "test_support.hpp"

using namespace phasebal;
using phasebal::testing::Gen;
using phasebal::testing::lossy_config;

namespace {

PhaseProblem default_phase() {
  const auto cfg = default_system_config(3);
  PhaseProblem ph;
  ph.cost_l = cfg.phases[0].cost_l;
  ph.cost_deg = cfg.phases[0].cost_deg;
  ph.has_storage = true;
  ph.u_max = 1.0;
  ph.net_lo = -1.0;
  ph.net_hi = 1.0;
  return ph;
}

std::set<std::string> keys(const nlohmann::json& j) {
  std::set<std::string> out;
  for (auto it = j.begin(); it != j.end(); ++it) out.insert(it.key());
  return out;
}

}  // namespace

TEST(PhaseAgent, ZeroStateRepliesZero) {
  for (auto mode : {StorageMode::Ideal, StorageMode::NonIdeal}) {
    PhaseAgent agent(default_phase(), mode, 5.0);
    const auto up = phase_agent_round(agent, {0, 0.0});
    EXPECT_EQ(up.k, 0);
    EXPECT_EQ(up.m, 0.0);
    EXPECT_EQ(agent.expected_k(), 1);
  }
}

TEST(PhaseAgent, RejectsOutOfOrderRounds) {
  PhaseAgent agent(default_phase(), StorageMode::Ideal, 5.0);
  EXPECT_THROW(agent.round({1, 0.0}), ProtocolOrderViolation);
  agent.round({0, 0.0});
  EXPECT_THROW(agent.round({0, 0.0}), ProtocolOrderViolation);
  EXPECT_THROW(agent.round({2, 0.0}), ProtocolOrderViolation);
  EXPECT_NO_THROW(agent.round({1, 0.0}));
}

TEST(PhaseAgent, Deterministic) {
  Gen g(401);
  for (int trial = 0; trial < 20; ++trial) {
    auto ph = default_phase();
    ph.r = g.uniform(-8, 8);
    ph.price = g.uniform(7, 12);
    ph.storage_weight = g.uniform(-100, 100);
    PhaseAgent a(ph, StorageMode::NonIdeal, 5.0), b(ph, StorageMode::NonIdeal, 5.0);
    for (int k = 0; k < 5; ++k) {
      const double f = g.uniform(-5, 5);
      const auto ua = a.round({k, f});
      const auto ub = b.round({k, f});
      EXPECT_EQ(ua.m, ub.m);
      EXPECT_EQ(a.lambda(), b.lambda());
    }
  }
}

TEST(PhaseAgent, AppliesDualUpdateOnNextDownlink) {
  auto ph = default_phase();
  ph.r = 2.0;
  ph.price = 10.0;
  PhaseAgent agent(ph, StorageMode::Ideal, 5.0);
  agent.round({0, 0.0});
  EXPECT_EQ(agent.lambda(), 0.0);
  const auto rep = agent.report();
  const double coupling = ph.r + rep.l - (rep.u_plus - rep.u_minus);
  agent.round({1, 0.75});
  EXPECT_DOUBLE_EQ(agent.lambda(), 5.0 * (0.75 + coupling));
}

TEST(Substation, UniformCouplingGivesEqualFlows) {
  FlowSet fs{CostFunction::quadratic(10.0), {-5, -5, -5}, {5, 5, 5}};
  Substation st(fs, 5.0, 1e-6, 1e-6);
  const auto down = substation_round(st, {UplinkMsg{0, 1.5}, UplinkMsg{0, 1.5}, UplinkMsg{0, 1.5}});
  ASSERT_EQ(down.size(), 3u);
  EXPECT_EQ(down[0].k, 1);
  EXPECT_NEAR(down[0].f, -1.5, 1e-12);
  EXPECT_EQ(down[0].f, down[1].f);
  EXPECT_EQ(down[1].f, down[2].f);
}

TEST(Substation, ZeroLossClamps) {
  FlowSet fs{CostFunction::quadratic(0.0), {-5, -5, -5}, {5, 5, 5}};
  Substation st(fs, 5.0, 1e-6, 1e-6);
  const auto down = st.round({UplinkMsg{0, 6.0}, UplinkMsg{0, -2.0}, UplinkMsg{0, -7.0}});
  EXPECT_NEAR(down[0].f, -5.0, 1e-12);
  EXPECT_NEAR(down[1].f, 2.0, 1e-12);
  EXPECT_NEAR(down[2].f, 5.0, 1e-12);
}

TEST(Substation, MissingOrStaleUplinksRejected) {
  FlowSet fs{CostFunction::quadratic(10.0), {-5, -5, -5}, {5, 5, 5}};
  Substation st(fs, 5.0, 1e-6, 1e-6);
  EXPECT_THROW(st.round({UplinkMsg{0, 0.0}, UplinkMsg{0, 0.0}}), MissingUplink);
  EXPECT_THROW(st.round({UplinkMsg{0, 0.0}, std::nullopt, UplinkMsg{0, 0.0}}), MissingUplink);
  EXPECT_THROW(st.round({UplinkMsg{0, 0.0}, UplinkMsg{1, 0.0}, UplinkMsg{0, 0.0}}), MissingUplink);
  EXPECT_EQ(st.k(), 0);
  st.round({UplinkMsg{0, 0.0}, UplinkMsg{0, 0.0}, UplinkMsg{0, 0.0}});
  EXPECT_THROW(st.round({UplinkMsg{0, 0.0}, UplinkMsg{0, 0.0}, UplinkMsg{0, 0.0}}), MissingUplink);
}

TEST(Substation, InitialDownlinksAreZero) {
  FlowSet fs{CostFunction::quadratic(10.0), {-5, -5}, {5, 5}};
  Substation st(fs, 5.0, 1e-6, 1e-6);
  for (const auto& d : st.initial_downlinks()) {
    EXPECT_EQ(d.k, 0);
    EXPECT_EQ(d.f, 0.0);
  }
  EXPECT_FALSE(st.converged());
}

TEST(Distributed, LockstepWithCentralizedIterates) {
  Gen g(402);
  for (int trial = 0; trial < 10; ++trial) {
    const auto mode = trial % 2 ? StorageMode::NonIdeal : StorageMode::Ideal;
    const auto cfg = mode == StorageMode::Ideal ? default_system_config(3) : lossy_config(3, 0.9);
    const auto p = g.proposed_problem(cfg, mode);
    std::vector<std::vector<double>> cf, cl, df, dl;
    AdmmOptions c_opts;
    c_opts.on_iterate = [&](int, const std::vector<double>& f, const std::vector<double>& l) {
      cf.push_back(f);
      cl.push_back(l);
    };
    AdmmOptions d_opts;
    d_opts.on_iterate = [&](int, const std::vector<double>& f, const std::vector<double>& l) {
      df.push_back(f);
      dl.push_back(l);
    };
    solve(p, c_opts);
    run_distributed_solve(p, d_opts);
    ASSERT_EQ(cf.size(), df.size());
    for (std::size_t k = 0; k < cf.size(); ++k) {
      EXPECT_EQ(cf[k], df[k]) << "iteration " << k + 1;
      for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(dl[k][i], cl[k][i], 1e-12 * std::max(1.0, std::abs(cl[k][i])));
      }
    }
  }
}

TEST(Distributed, ActionMatchesCentralized) {
  Gen g(403);
  for (int trial = 0; trial < 20; ++trial) {
    const auto mode = trial % 2 ? StorageMode::NonIdeal : StorageMode::Ideal;
    const auto cfg = mode == StorageMode::Ideal ? default_system_config(3) : lossy_config(3, 0.9);
    const auto p = g.proposed_problem(cfg, mode);
    const auto c = solve(p);
    const auto d = run_distributed_solve(p);
    EXPECT_EQ(d.iterations, c.state.k);
    EXPECT_EQ(d.message_count, 2u * 3u * static_cast<std::size_t>(d.iterations));
    EXPECT_EQ(d.report_count, 3u);
    EXPECT_TRUE(d.converged);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_NEAR(d.action.l[i], c.action.l[i], 1e-9);
      EXPECT_NEAR(d.action.u_plus[i], c.action.u_plus[i], 1e-9);
      EXPECT_NEAR(d.action.u_minus[i], c.action.u_minus[i], 1e-9);
      EXPECT_NEAR(d.action.f[i], c.action.f[i], 1e-9);
      EXPECT_NEAR(d.lambda[i], c.state.lambda[i], 1e-9 * std::max(1.0, std::abs(c.state.lambda[i])));
    }
    EXPECT_NEAR(d.objective, c.objective, 1e-9 * std::max(1.0, std::abs(c.objective)));
  }
}

TEST(Distributed, WireFormatCarriesNoPrivateData) {
  const auto up = nlohmann::json::parse(to_json(UplinkMsg{3, 1.25}));
  EXPECT_EQ(keys(up), (std::set<std::string>{"k", "m"}));
  const auto down = nlohmann::json::parse(to_json(DownlinkMsg{3, -0.5}));
  EXPECT_EQ(keys(down), (std::set<std::string>{"k", "f"}));

  Gen g(404);
  const auto p = g.proposed_problem(default_system_config(3), StorageMode::Ideal);
  std::ostringstream log;
  const auto res = run_distributed_solve(p, {}, &log);
  std::istringstream in(log.str());
  std::string line;
  std::size_t ups = 0, downs = 0, reports = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(keys(j), (std::set<std::string>{"direction", "k", "phase", "payload"}));
    const auto dir = j["direction"].get<std::string>();
    if (dir == "up") {
      ++ups;
      EXPECT_EQ(keys(j["payload"]), (std::set<std::string>{"k", "m"}));
    } else if (dir == "down") {
      ++downs;
      EXPECT_EQ(keys(j["payload"]), (std::set<std::string>{"k", "f"}));
    } else {
      EXPECT_EQ(dir, "report");
      ++reports;
      EXPECT_EQ(keys(j["payload"]), (std::set<std::string>{"l", "u_plus", "u_minus"}));
    }
  }
  EXPECT_EQ(ups + downs, res.message_count);
  EXPECT_EQ(ups, downs);
  EXPECT_EQ(reports, 3u);
}

TEST(Distributed, ModerateAccuracyWithinTwentyRounds) {
  Gen g(405);
  const auto cfg = default_system_config(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = g.proposed_problem(cfg, StorageMode::Ideal);
    AdmmOptions opts;
    opts.max_iter = 20;
    opts.throw_on_nonconverged = false;
    const auto d = run_distributed_solve(p, opts);
    const double ref = oracle_solve(p).objective;
    EXPECT_LE(d.iterations, 20);
    EXPECT_LE(std::abs(d.objective - ref) / std::max(1.0, std::abs(ref)), 1e-2);
  }
}

TEST(Distributed, NonconvergenceAndWarmStartHandling) {
  Gen g(406);
  const auto p = g.proposed_problem(default_system_config(3), StorageMode::Ideal);
  AdmmOptions opts;
  opts.max_iter = 2;
  opts.tol_primal = opts.tol_dual = 1e-14;
  EXPECT_THROW(run_distributed_solve(p, opts), Nonconverged);
  opts.throw_on_nonconverged = false;
  const auto d = run_distributed_solve(p, opts);
  EXPECT_FALSE(d.converged);
  EXPECT_EQ(d.iterations, 2);
  EXPECT_EQ(d.message_count, 12u);

  AdmmOptions warm;
  warm.start = AdmmStart{{0, 0, 0}, {0, 0, 0}};
  EXPECT_THROW(run_distributed_solve(p, warm), InvalidConfig);
}

TEST(Distributed, SimulationMatchesCentralized) {
  for (auto mode : {StorageMode::Ideal, StorageMode::NonIdeal}) {
    auto run = default_run_config(3, 21);
    run.mode = mode;
    if (mode == StorageMode::NonIdeal) run.system = lossy_config(3, 0.9);
    run.scenario.horizon = 60;
    auto dist = run;
    dist.solver = SolverKind::Distributed;
    const auto a = run_simulation(run);
    const auto b = run_simulation(dist);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t t = 0; t < a.records.size(); ++t) {
      EXPECT_EQ(a.records[t].iterations, b.records[t].iterations);
      EXPECT_NEAR(a.records[t].cost.total, b.records[t].cost.total, 1e-9);
      for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a.records[t].s_after[i], b.records[t].s_after[i], 1e-9);
    }
  }
}
