#pragma once

#include "linkshift/aggregate.hpp"
#include "linkshift/delaydetect.hpp"
#include "linkshift/diffrtt.hpp"
#include "linkshift/fwdetect.hpp"
#include "linkshift/ingest.hpp"
#include "linkshift/ip.hpp"
#include "linkshift/output.hpp"
#include "linkshift/pipeline.hpp"
#include "linkshift/random.hpp"
#include "linkshift/run.hpp"
#include "linkshift/state.hpp"
#include "linkshift/synth.hpp"
