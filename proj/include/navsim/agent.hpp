#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>

#include "navsim/world.hpp"

namespace navsim {

/// Raised by agents that talk to another process when the exchange fails.
class TransportError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/**
 * A navigation agent. `reset` starts an episode; `act` is called exactly
 * once per simulator step with the newest frame and returns the agent's
 * free-form answer. `finish` is called once when the episode ends.
 */
class Agent {
  public:
    virtual ~Agent() = default;
    virtual void reset(const Episode& episode) = 0;
    virtual std::string act(const FrameFeatures& frame) = 0;
    virtual void finish() {}
};

using AgentFactory = std::function<std::unique_ptr<Agent>()>;

}  // namespace navsim
