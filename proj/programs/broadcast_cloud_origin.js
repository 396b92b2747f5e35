jdata {
  	double x as broadcaster;
}
jcond {
  	cloudonly: sys.type == "cloud";
}
jasync {cloudonly} function fname() {
  	x = fname1();
}
