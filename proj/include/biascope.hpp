#pragma once

#include "biascope/contingency.hpp"
#include "biascope/crossfit.hpp"
#include "biascope/csv.hpp"
#include "biascope/digest.hpp"
#include "biascope/folds.hpp"
#include "biascope/inference.hpp"
#include "biascope/infotheo.hpp"
#include "biascope/logistic.hpp"
#include "biascope/matrix.hpp"
#include "biascope/metrics.hpp"
#include "biascope/parallel.hpp"
#include "biascope/report.hpp"
#include "biascope/rng.hpp"
#include "biascope/synthlab.hpp"
#include "biascope/table.hpp"
#include "biascope/version.hpp"
