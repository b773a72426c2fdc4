#pragma once

namespace qtr {

inline constexpr const char* kEngineName = "videoqtr";
inline constexpr const char* kEngineVersion = "0.1.0";

// Tag written into every trace header; replay refuses other tags.
inline constexpr const char* kTraceFormatTag = "videoqtr-trace/1";

}  // namespace qtr
