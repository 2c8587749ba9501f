#ifndef GDRO_GDRO_HPP
#define GDRO_GDRO_HPP

#include "gdro/rng.hpp"
#include "gdro/problem.hpp"
#include "gdro/geometry.hpp"
#include "gdro/learners.hpp"
#include "gdro/data.hpp"
#include "gdro/trajectory.hpp"
#include "gdro/evaluation.hpp"
#include "gdro/linear_problem.hpp"
#include "gdro/lower_bound.hpp"
#include "gdro/solvers.hpp"
#include "gdro/parallel.hpp"
#include "gdro/reference.hpp"
#include "gdro/experiment.hpp"

#endif
