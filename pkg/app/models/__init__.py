# Modelos de datos compartidos