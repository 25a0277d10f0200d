# Motor de regresión simbólica con aprendizaje activo
__version__ = "1.0.0"
