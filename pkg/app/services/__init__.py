"""Services: dataset preparation, model training, counterfactual generation, evaluation and export."""
