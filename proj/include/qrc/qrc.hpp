#pragma once

// Umbrella header: the whole calibration toolkit.

#include "qrc/calibration.hpp"
#include "qrc/cavity.hpp"
#include "qrc/errors.hpp"
#include "qrc/homodyne.hpp"
#include "qrc/levmar.hpp"
#include "qrc/quantum.hpp"
#include "qrc/reference.hpp"
#include "qrc/rng.hpp"
#include "qrc/simulator.hpp"
#include "qrc/trace.hpp"
#include "qrc/trace_io.hpp"
#include "qrc/uncertain.hpp"
#include "qrc/version.hpp"
