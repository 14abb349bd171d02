# Step definitions package
