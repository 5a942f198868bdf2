#pragma once

#include "lsas/graph.hpp"
#include "lsas/subsets.hpp"
#include "lsas/graph_algorithms.hpp"
#include "lsas/graph_io.hpp"
#include "lsas/scm.hpp"
#include "lsas/scm_io.hpp"
#include "lsas/ci_test.hpp"
#include "lsas/mb_discovery.hpp"
#include "lsas/engine.hpp"
#include "lsas/fixtures.hpp"
