#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "decmarl/envs.hpp"

namespace decmarl::test_support {

struct AuditResult {
  std::int64_t audited = 0;
  std::vector<std::string> problems;
  bool ok() const { return audited > 0 && problems.empty(); }
};

// Checks every riddle state and available joint action against the rules
// written out directly: Tell pays +1 exactly when everyone, the teller
// included, has been in the room, and ends the episode; EndEpisode ends with
// 0; anything else pays 0 and sends a uniformly drawn agent in next.
inline AuditResult audit_riddle(const SwitchOptions& options) {
  const EnvPtr env = make_switch(options);
  const SwitchCodec codec(options);
  const int n = options.num_agents;
  const std::uint32_t everyone = (1U << n) - 1;
  AuditResult out;
  auto fail = [&](StateId s, JointActionId a, const std::string& what) {
    std::ostringstream msg;
    msg << "state " << s << " action " << a << ": " << what;
    out.problems.push_back(msg.str());
  };
  std::vector<Successor> row;
  for (StateId s = codec.num_bridge_states(); s < codec.num_states(); ++s) {
    const SwitchState st = codec.decode(s);
    if (st.phase != SwitchPhase::kRiddle) {
      fail(s, -1, "not a riddle state");
      continue;
    }
    for (JointActionId a = 0; a < env->num_joint_actions(); ++a) {
      if (!env->joint_action_available(s, a)) continue;
      ++out.audited;
      const int act = env->agent_action(a, st.in_room);
      for (int j = 0; j < n; ++j) {
        if (j != st.in_room && env->agent_action(a, j) != kSwitchNone) fail(s, a, "agent outside the room acts");
      }
      const std::uint32_t visited = st.visited | (1U << st.in_room);
      const RewardSpec r = env->reward(s, a);
      if (r.noise != 0.0) fail(s, a, "reward is noisy");
      if (act == kSwitchTell) {
        if (r.mean != (visited == everyone ? 1.0 : -1.0)) fail(s, a, "wrong Tell reward");
        if (env->termination(s, a) != 1.0) fail(s, a, "Tell does not terminate");
        continue;
      }
      if (r.mean != 0.0) fail(s, a, "non-Tell action pays");
      if (env->termination(s, a) != (act == kSwitchEndEpisode ? 1.0 : 0.0)) fail(s, a, "wrong termination");
      if (act == kSwitchEndEpisode) continue;
      bool on = st.switch_on;
      if (act == kSwitchTurnOn) on = true;
      if (act == kSwitchTurnOff) on = false;
      env->successors(s, a, row);
      if (row.size() != static_cast<std::size_t>(n)) {
        fail(s, a, "successor count");
        continue;
      }
      for (int k = 0; k < n; ++k) {
        SwitchState next;
        next.phase = SwitchPhase::kRiddle;
        if (options.with_bridge) next.positions.assign(static_cast<std::size_t>(n), options.bridge_length);
        next.in_room = k;
        next.switch_on = on;
        next.visited = visited;
        const StateId id = codec.encode(next);
        double p = 0.0;
        for (const auto& e : row) {
          if (e.state == id) p = e.probability;
        }
        if (std::abs(p - 1.0 / n) > 1e-15) fail(s, a, "next in-room agent is not uniform");
      }
    }
  }
  return out;
}

}  // namespace decmarl::test_support
