#include "tforest/error.hpp"

namespace tforest {

namespace {

std::string located(const std::string& message, const std::string& file, std::size_t line)
{
    if (file.empty())
        return message;
    if (line == 0)
        return file + ": " + message;
    return file + ":" + std::to_string(line) + ": " + message;
}

} // namespace

DataError::DataError(const std::string& message, const std::string& file, std::size_t line)
    : Error(located(message, file, line)), file_(file), line_(line)
{
}

} // namespace tforest
