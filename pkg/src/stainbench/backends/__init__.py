"""Built-in segmentation backends speaking the child-process protocol."""
