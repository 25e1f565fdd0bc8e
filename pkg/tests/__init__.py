# Collaborative linear best-arm identification - tests package
