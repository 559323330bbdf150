#pragma once

#define CONVSCCS_VERSION "0.1.0"
