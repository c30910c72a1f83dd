#pragma once

#include "flownet/classify.hpp"
#include "flownet/ensemble.hpp"
#include "flownet/error.hpp"
#include "flownet/flows.hpp"
#include "flownet/log.hpp"
#include "flownet/measures.hpp"
#include "flownet/netbuild.hpp"
#include "flownet/parallel.hpp"
#include "flownet/rng.hpp"
#include "flownet/theory.hpp"
