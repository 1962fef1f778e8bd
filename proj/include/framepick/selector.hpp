#pragma once

#include <algorithm>
#include <numeric>

#include "framepick/encoder.hpp"
#include "framepick/reward_model.hpp"

namespace framepick {

struct SelectionResult {
  Combination selected;               // T indices, ascending temporal order
  std::vector<double> frame_rewards;  // length M
  double predicted_reward = 0.0;      // mean reward of the selected frames
};

/// Indices of the T largest rewards (ties to the lower index), ascending.
inline Combination top_t_indices(const std::vector<double>& rewards,
                                 std::size_t T) {
  if (T < 1 || T > rewards.size())
    throw std::invalid_argument("top_t_indices: need 1 <= T <= M");
  std::vector<std::size_t> order(rewards.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rewards[a] > rewards[b];
  });
  order.resize(T);
  std::sort(order.begin(), order.end());
  return Combination{std::move(order)};
}

/// Top-T frames by per-frame reward, emitted in original temporal order.
inline SelectionResult select_top_t(const FrameFeatureSet& frames,
                                    const QueryFeatureSet& query,
                                    const std::vector<MixerParams>& mixer,
                                    const RewardHeadParams& heads,
                                    std::size_t T) {
  if (T < 1 || T > frames.M)
    throw std::invalid_argument("select_top_t: need 1 <= T <= M");
  const auto mixed = mix(frames, query, mixer);
  const auto out = forward(mixed, heads);

  SelectionResult res;
  res.selected = top_t_indices(out.frame_rewards, T);
  res.frame_rewards = out.frame_rewards;
  res.predicted_reward = combination_reward(out, res.selected);
  return res;
}

inline SelectionResult select_top_t(const FrameFeatureSet& frames,
                                    const QueryFeatureSet& query,
                                    const MixerParams& mixer,
                                    const RewardHeadParams& heads,
                                    std::size_t T) {
  return select_top_t(frames, query, std::vector<MixerParams>{mixer}, heads, T);
}

}  // namespace framepick
