jdata {
  	double x as broadcaster;
}
jcond {
  	fogonly: sys.type == "fog";
}
jasync {fogonly} function fname() {
  	x = fname1();
}
