#include <cstdlib>
#include <stdexcept>

#include "decmarl/envs.hpp"

namespace decmarl {

namespace {

constexpr int kAssignments[6][2] = {{0, 1}, {0, 2}, {1, 0}, {1, 2}, {2, 0}, {2, 1}};
constexpr std::int64_t kMaxListedInitialStates = 5'000'000;

int assignment_index(const int goal[2]) {
  for (int k = 0; k < 6; ++k) {
    if (kAssignments[k][0] == goal[0] && kAssignments[k][1] == goal[1]) return k;
  }
  throw std::invalid_argument("grid_ref: goals must be two distinct landmarks");
}

DecPomdpShape grid_shape(const GridReferenceOptions& o) {
  if (o.grid_size < 2) throw std::invalid_argument("grid_ref: grid size must be at least 2");
  if (o.num_messages < 1) throw std::invalid_argument("grid_ref: need at least one message");
  const std::int64_t cells = static_cast<std::int64_t>(o.grid_size) * o.grid_size;
  const std::int64_t msgs = o.num_messages + 1;
  DecPomdpShape shape;
  shape.num_agents = 2;
  shape.num_states = cells * cells * cells * cells * cells * 6 * msgs * msgs;
  shape.actions_per_agent.assign(2, 5 * o.num_messages);
  shape.obs_per_agent.assign(2, cells * cells * cells * cells * 3 * msgs);
  shape.gamma = o.gamma;
  shape.horizon = o.horizon;
  return shape;
}

}  // namespace

GridReferenceDecPomdp::GridReferenceDecPomdp(GridReferenceOptions options)
    : TabularDecPomdp(grid_shape(options)), options_(options), cells_(options.grid_size * options.grid_size) {}

StateId GridReferenceDecPomdp::encode(const GridReferenceState& st) const {
  const StateId msgs = options_.num_messages + 1;
  StateId id = st.agent_pos[0];
  id = id * cells_ + st.agent_pos[1];
  for (int k = 0; k < 3; ++k) id = id * cells_ + st.landmark_pos[k];
  id = id * 6 + assignment_index(st.goal);
  id = id * msgs + st.last_message[0];
  id = id * msgs + st.last_message[1];
  return id;
}

GridReferenceState GridReferenceDecPomdp::decode(StateId id) const {
  const StateId msgs = options_.num_messages + 1;
  GridReferenceState st;
  st.last_message[1] = static_cast<int>(id % msgs);
  id /= msgs;
  st.last_message[0] = static_cast<int>(id % msgs);
  id /= msgs;
  const int k = static_cast<int>(id % 6);
  st.goal[0] = kAssignments[k][0];
  st.goal[1] = kAssignments[k][1];
  id /= 6;
  for (int l = 2; l >= 0; --l) {
    st.landmark_pos[l] = static_cast<int>(id % cells_);
    id /= cells_;
  }
  st.agent_pos[1] = static_cast<int>(id % cells_);
  st.agent_pos[0] = static_cast<int>(id / cells_);
  return st;
}

ObsId GridReferenceDecPomdp::encode_observation(int own_pos, const int landmark_pos[3], int other_goal,
                                                int other_message) const {
  ObsId o = own_pos;
  for (int k = 0; k < 3; ++k) o = o * cells_ + landmark_pos[k];
  o = o * 3 + other_goal;
  return o * (options_.num_messages + 1) + other_message;
}

int GridReferenceDecPomdp::move_cell(int cell, int move) const {
  const int g = options_.grid_size;
  int x = cell % g;
  int y = cell / g;
  switch (move) {
    case kMoveLeft: x = std::max(0, x - 1); break;
    case kMoveRight: x = std::min(g - 1, x + 1); break;
    case kMoveUp: y = std::max(0, y - 1); break;
    case kMoveDown: y = std::min(g - 1, y + 1); break;
    default: break;
  }
  return y * g + x;
}

GridReferenceState GridReferenceDecPomdp::step_state(const GridReferenceState& st, JointActionId a) const {
  GridReferenceState next = st;
  for (int j = 0; j < 2; ++j) {
    const int act = agent_action(a, j);
    next.agent_pos[j] = move_cell(st.agent_pos[j], move_of(act));
    next.last_message[j] = message_of(act);
  }
  return next;
}

double GridReferenceDecPomdp::reward_at(const GridReferenceState& st) const {
  const int g = options_.grid_size;
  double total = 0.0;
  for (int j = 0; j < 2; ++j) {
    const int target = st.landmark_pos[st.goal[j]];
    total += std::abs(st.agent_pos[j] % g - target % g) + std::abs(st.agent_pos[j] / g - target / g);
  }
  return 1.0 - total / (2.0 * 2.0 * (g - 1));
}

void GridReferenceDecPomdp::successors(StateId s, JointActionId a, std::vector<Successor>& out) const {
  out.assign(1, {encode(step_state(decode(s), a)), 1.0});
}

RewardSpec GridReferenceDecPomdp::reward(StateId s, JointActionId a) const {
  return {reward_at(step_state(decode(s), a)), 0.0};
}

void GridReferenceDecPomdp::observe(StateId s, JointActionId, std::span<ObsId> out) const {
  const GridReferenceState st = decode(s);
  for (int j = 0; j < 2; ++j) {
    out[static_cast<std::size_t>(j)] = encode_observation(st.agent_pos[j], st.landmark_pos, st.goal[1 - j], st.last_message[1 - j]);
  }
}

void GridReferenceDecPomdp::initial_states(std::vector<Successor>& out) const {
  const std::int64_t c = cells_;
  const std::int64_t count = c * c * c * c * c * 6;
  if (count > kMaxListedInitialStates) throw std::length_error("grid_ref: initial distribution too large to list");
  out.clear();
  out.reserve(static_cast<std::size_t>(count));
  const double p = 1.0 / static_cast<double>(count);
  GridReferenceState st;
  st.last_message[0] = st.last_message[1] = options_.num_messages;
  for (int a0 = 0; a0 < cells_; ++a0) {
    for (int a1 = 0; a1 < cells_; ++a1) {
      for (int l0 = 0; l0 < cells_; ++l0) {
        for (int l1 = 0; l1 < cells_; ++l1) {
          for (int l2 = 0; l2 < cells_; ++l2) {
            for (const auto& goal : kAssignments) {
              st.agent_pos[0] = a0;
              st.agent_pos[1] = a1;
              st.landmark_pos[0] = l0;
              st.landmark_pos[1] = l1;
              st.landmark_pos[2] = l2;
              st.goal[0] = goal[0];
              st.goal[1] = goal[1];
              out.push_back({encode(st), p});
            }
          }
        }
      }
    }
  }
}

StateId GridReferenceDecPomdp::sample_initial(Rng& rng) const {
  GridReferenceState st;
  for (int j = 0; j < 2; ++j) st.agent_pos[j] = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(cells_)));
  for (int k = 0; k < 3; ++k) st.landmark_pos[k] = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(cells_)));
  const auto& goal = kAssignments[rng.uniform_index(6)];
  st.goal[0] = goal[0];
  st.goal[1] = goal[1];
  st.last_message[0] = st.last_message[1] = options_.num_messages;
  return encode(st);
}

StateId GridReferenceDecPomdp::sample_successor(StateId s, JointActionId a, Rng&) const {
  return encode(step_state(decode(s), a));
}

PolicySpace GridReferenceDecPomdp::policy_space() const {
  PolicySpace space;
  space.horizon = horizon();
  for (int j = 0; j < 2; ++j) {
    AgentPolicySpace agent;
    agent.num_observations = shape().obs_per_agent[static_cast<std::size_t>(j)];
    agent.num_actions = num_actions(j);
    int lm[3];
    for (int own = 0; own < cells_; ++own) {
      for (lm[0] = 0; lm[0] < cells_; ++lm[0]) {
        for (lm[1] = 0; lm[1] < cells_; ++lm[1]) {
          for (lm[2] = 0; lm[2] < cells_; ++lm[2]) {
            for (int goal = 0; goal < 3; ++goal) {
              agent.initial_observations.push_back(encode_observation(own, lm, goal, options_.num_messages));
            }
          }
        }
      }
    }
    space.agents.push_back(std::move(agent));
  }
  return space;
}

std::shared_ptr<const GridReferenceDecPomdp> make_grid_reference(const GridReferenceOptions& options) {
  return std::make_shared<GridReferenceDecPomdp>(options);
}

}  // namespace decmarl
