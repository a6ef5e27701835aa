# Data preparation, training, evaluation and reporting
