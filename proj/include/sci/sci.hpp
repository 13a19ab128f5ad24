#pragma once

#include "sci/common.hpp"
#include "sci/sigsim.hpp"
#include "sci/decomp.hpp"
#include "sci/reliability.hpp"
#include "sci/interpreter.hpp"
#include "sci/spcore.hpp"
#include "sci/controller.hpp"
#include "sci/mcloop.hpp"
#include "sci/feedback.hpp"
#include "sci/metrics.hpp"
#include "sci/presets.hpp"
#include "sci/loop.hpp"
#include "sci/harness.hpp"
#include "sci/service.hpp"
