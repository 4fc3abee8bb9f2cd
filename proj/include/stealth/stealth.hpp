#pragma once

#include "stealth/adversary.hpp"
#include "stealth/cluster.hpp"
#include "stealth/data.hpp"
#include "stealth/error.hpp"
#include "stealth/explain.hpp"
#include "stealth/learners.hpp"
#include "stealth/metrics.hpp"
#include "stealth/mitigation.hpp"
#include "stealth/pipeline.hpp"
#include "stealth/random.hpp"
#include "stealth/stats.hpp"
