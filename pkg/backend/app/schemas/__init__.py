# Pydantic schemas for configuration, data and reports
