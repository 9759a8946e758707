#pragma once

#include "nkoop/core.hpp"
#include "nkoop/dataset_io.hpp"
#include "nkoop/pcc.hpp"
#include "nkoop/plant.hpp"
#include "nkoop/edmd.hpp"
#include "nkoop/mlp.hpp"
#include "nkoop/neural_koopman.hpp"
#include "nkoop/lifted_model.hpp"
#include "nkoop/mpc.hpp"
#include "nkoop/pcc_control.hpp"
#include "nkoop/metrics.hpp"
#include "nkoop/checkpoint.hpp"
#include "nkoop/experiments.hpp"
#include "nkoop/report.hpp"
