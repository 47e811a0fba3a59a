class TrainerError(Exception):
    """Any domain error in the training pipeline."""
