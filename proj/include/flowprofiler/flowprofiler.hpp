#pragma once

#include "flowprofiler/birch.hpp"
#include "flowprofiler/config.hpp"
#include "flowprofiler/dbscan.hpp"
#include "flowprofiler/experiment.hpp"
#include "flowprofiler/features.hpp"
#include "flowprofiler/flow.hpp"
#include "flowprofiler/kmeans.hpp"
#include "flowprofiler/metrics.hpp"
#include "flowprofiler/minibatch.hpp"
#include "flowprofiler/pca.hpp"
#include "flowprofiler/pcap.hpp"
#include "flowprofiler/stream.hpp"
#include "flowprofiler/synth.hpp"
#include "flowprofiler/tuning.hpp"
