#include <algorithm>
#include <stdexcept>

#include "decmarl/envs.hpp"

namespace decmarl {

SwitchCodec::SwitchCodec(SwitchOptions options) : options_(options) {
  if (options_.num_agents < 2 || options_.num_agents > 16) throw std::invalid_argument("switch: need 2 to 16 agents");
  if (options_.horizon < 1) throw std::invalid_argument("switch: horizon must be at least 1");
  if (options_.with_bridge && options_.bridge_length < 1) throw std::invalid_argument("switch: bridge length must be positive");
  const int n = options_.num_agents;
  num_riddle_states_ = static_cast<StateId>(n) * 2 * (StateId{1} << n);
  if (options_.with_bridge) {
    num_bridge_states_ = 1;
    for (int j = 0; j < n; ++j) num_bridge_states_ *= options_.bridge_length + 1;
  }
}

StateId SwitchCodec::encode(const SwitchState& st) const {
  const int n = options_.num_agents;
  if (st.phase == SwitchPhase::kBridge) {
    StateId id = 0;
    for (int j = 0; j < n; ++j) id = id * (options_.bridge_length + 1) + st.positions[static_cast<std::size_t>(j)];
    return id;
  }
  return num_bridge_states_ + (static_cast<StateId>(st.in_room) * 2 + (st.switch_on ? 1 : 0)) * (StateId{1} << n) + st.visited;
}

SwitchState SwitchCodec::decode(StateId id) const {
  if (id < 0 || id >= num_states()) throw std::out_of_range("switch: state id out of range");
  const int n = options_.num_agents;
  SwitchState st;
  if (id < num_bridge_states_) {
    st.phase = SwitchPhase::kBridge;
    st.positions.assign(static_cast<std::size_t>(n), 0);
    for (int j = n - 1; j >= 0; --j) {
      st.positions[static_cast<std::size_t>(j)] = static_cast<int>(id % (options_.bridge_length + 1));
      id /= options_.bridge_length + 1;
    }
    return st;
  }
  id -= num_bridge_states_;
  st.phase = SwitchPhase::kRiddle;
  if (options_.with_bridge) st.positions.assign(static_cast<std::size_t>(n), options_.bridge_length);
  st.visited = static_cast<std::uint32_t>(id % (StateId{1} << n));
  id >>= n;
  st.switch_on = (id % 2) == 1;
  st.in_room = static_cast<int>(id / 2);
  return st;
}

ObsId SwitchCodec::num_observations() const { return options_.with_bridge ? options_.bridge_length + 4 : 3; }

EnvPtr make_switch(const SwitchOptions& options) {
  const SwitchCodec codec(options);
  const int n = options.num_agents;
  const int num_actions = codec.num_actions();
  const ObsId riddle_obs = options.with_bridge ? options.bridge_length + 1 : 0;
  const std::uint32_t everyone = (std::uint32_t{1} << n) - 1;

  DecPomdpShape shape;
  shape.num_agents = n;
  shape.num_states = codec.num_states();
  shape.actions_per_agent.assign(static_cast<std::size_t>(n), num_actions);
  shape.obs_per_agent.assign(static_cast<std::size_t>(n), codec.num_observations());
  shape.gamma = 0.99;
  shape.horizon = options.horizon;
  DecPomdpTables t = DecPomdpTables::allocate(options.with_bridge ? "switch_bridge" : "switch", shape);
  t.reward_bounds = {-1.0, 1.0};
  const MixedRadix joint(std::vector<std::int64_t>(static_cast<std::size_t>(n), num_actions));

  auto riddle_entry = [&](bool switch_on, std::uint32_t visited, std::vector<Successor>& row) {
    row.clear();
    for (int k = 0; k < n; ++k) {
      SwitchState next;
      next.phase = SwitchPhase::kRiddle;
      next.in_room = k;
      next.switch_on = switch_on;
      next.visited = visited;
      row.push_back({codec.encode(next), 1.0 / n});
    }
  };

  if (options.with_bridge) {
    SwitchState start;
    start.phase = SwitchPhase::kBridge;
    start.positions.assign(static_cast<std::size_t>(n), 0);
    t.initial[static_cast<std::size_t>(codec.encode(start))] = 1.0;
  } else {
    for (int k = 0; k < n; ++k) {
      SwitchState start;
      start.in_room = k;
      t.initial[static_cast<std::size_t>(codec.encode(start))] = 1.0 / n;
    }
  }

  std::vector<int> actions(static_cast<std::size_t>(n));
  for (StateId s = 0; s < codec.num_states(); ++s) {
    const SwitchState st = codec.decode(s);
    for (int j = 0; j < n; ++j) {
      ActionMask mask = 0;
      ObsId o = 0;
      if (st.phase == SwitchPhase::kBridge) {
        mask = (ActionMask{1} << kSwitchLeft) | (ActionMask{1} << kSwitchRight) | (ActionMask{1} << kSwitchEndEpisode);
        o = st.positions[static_cast<std::size_t>(j)];
      } else if (j == st.in_room) {
        mask = full_mask(num_actions);
        o = riddle_obs + (st.switch_on ? 2 : 1);
      } else {
        mask = ActionMask{1} << kSwitchNone;
        o = riddle_obs;
      }
      t.availability[static_cast<std::size_t>(s * n + j)] = mask;
      for (JointActionId prev = kNoJointAction; prev < joint.size(); ++prev) {
        t.observations[t.observation_index(s, prev, j)] = o;
      }
    }
    for (JointActionId a = 0; a < joint.size(); ++a) {
      joint.decode(a, std::span<int>(actions));
      const auto i = t.pair_index(s, a);
      if (st.phase == SwitchPhase::kBridge) {
        bool end = false;
        bool across = true;
        SwitchState next = st;
        for (int j = 0; j < n; ++j) {
          int& p = next.positions[static_cast<std::size_t>(j)];
          const int act = actions[static_cast<std::size_t>(j)];
          if (act == kSwitchEndEpisode) end = true;
          if (act == kSwitchLeft) p = std::max(0, p - 1);
          if (act == kSwitchRight) p = std::min(options.bridge_length, p + 1);
          across = across && p == options.bridge_length;
        }
        if (across) riddle_entry(false, 0, t.transitions[i]);
        else t.transitions[i] = {{codec.encode(next), 1.0}};
        t.terminations[i] = end ? 1.0 : 0.0;
        continue;
      }
      const int act = actions[static_cast<std::size_t>(st.in_room)];
      const std::uint32_t visited = st.visited | (std::uint32_t{1} << st.in_room);
      bool switch_on = st.switch_on;
      if (act == kSwitchTurnOn) switch_on = true;
      if (act == kSwitchTurnOff) switch_on = false;
      riddle_entry(switch_on, visited, t.transitions[i]);
      if (act == kSwitchTell) {
        t.rewards[i].mean = visited == everyone ? 1.0 : -1.0;
        t.terminations[i] = 1.0;
      } else if (act == kSwitchEndEpisode) {
        t.terminations[i] = 1.0;
      }
    }
  }
  return std::make_shared<ExplicitDecPomdp>(std::move(t));
}

EnvPtr make_switch_bridge(int num_agents, int horizon, int bridge_length) {
  SwitchOptions options;
  options.num_agents = num_agents;
  options.horizon = horizon;
  options.with_bridge = true;
  options.bridge_length = bridge_length;
  return make_switch(options);
}

}  // namespace decmarl
