#pragma once

#include "navsim/core.hpp"
#include "navsim/actions.hpp"
#include "navsim/world.hpp"
#include "navsim/encoder.hpp"
#include "navsim/prompt.hpp"
#include "navsim/policy.hpp"
#include "navsim/agent.hpp"
#include "navsim/expert.hpp"
#include "navsim/runner.hpp"
#include "navsim/agents.hpp"
#include "navsim/protocol.hpp"
#include "navsim/dataset.hpp"
#include "navsim/app.hpp"
