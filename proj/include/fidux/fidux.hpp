#pragma once

#include "baseline_hazard.hpp"
#include "dga_simulator.hpp"
#include "fiducial_solver.hpp"
#include "gibbs_sampler.hpp"
#include "partial_likelihood.hpp"
#include "report.hpp"
#include "risk_moments.hpp"
#include "rng.hpp"
#include "survival_data.hpp"
