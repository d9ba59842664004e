#pragma once

#include "bcr/commands.hpp"
#include "bcr/fixture.hpp"
