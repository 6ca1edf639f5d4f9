#pragma once

#include "umbra/attack.hpp"
#include "umbra/bench.hpp"
#include "umbra/classifier.hpp"
#include "umbra/color.hpp"
#include "umbra/corpus.hpp"
#include "umbra/error.hpp"
#include "umbra/geometry.hpp"
#include "umbra/image.hpp"
#include "umbra/image_io.hpp"
#include "umbra/oracle.hpp"
#include "umbra/pso.hpp"
#include "umbra/random.hpp"
#include "umbra/schedule.hpp"
#include "umbra/shadow.hpp"
#include "umbra/solar.hpp"
#include "umbra/transforms.hpp"
